use std::path::Path;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use dqcpwm_core::measure::{apply_trajectory, MeasurementSpec};
use dqcpwm_core::model::build_mpo;
use dqcpwm_core::obs::{
    self, align_zfm_branch, central_charge_fit, correlation_length, entanglement_entropy,
    locate_peak, order_parameters, power_law_fit, CriticalityReport, DeltaSProbe,
};
use dqcpwm_core::umps::UniformMps;
use dqcpwm_core::vumps::{vumps_ground_state, GroundStateResult};

use crate::config::{parse_pattern, ScanConfig};
use crate::store::{append_rows, CheckpointStore, Row};

pub struct RunReport {
    pub rows_written: usize,
    pub failures: Vec<String>,
}

/// Observables of a ground state, as a CSV row.
fn gs_row(cfg: &ScanConfig, k: f64, res: &GroundStateResult, state: &UniformMps) -> Result<Row> {
    let (xi, l1, l2) = correlation_length(state)?;
    let s_ent = entanglement_entropy(state)?;
    let (o_vbs, o_zfm, o_zafm) = order_parameters(state)?;
    Ok(Row {
        k,
        chi: state.chi(),
        spec: None,
        p_cell: 1.0,
        energy_per_site: res.energy_per_site,
        s_ent,
        xi,
        lambda1: l1,
        lambda2: l2,
        o_vbs,
        o_zfm,
        o_zafm,
        grad_norm: res.gradient_norm,
        iterations: res.iterations,
        seed: res.seed,
    })
}

/// Solve (or reuse) the ground state at one `(K, chi)` point.
fn solve_point(
    cfg: &ScanConfig,
    store: &CheckpointStore,
    k: f64,
    chi: usize,
    init: Option<UniformMps>,
) -> Result<GroundStateResult> {
    let p = cfg.model_at(k);
    if let Some((state, meta)) = store.load(p.jx, p.jz, k, chi, cfg.seed, cfg.solver.tol) {
        let energy: f64 = meta.get("energy").and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
        let grad: f64 = meta
            .get("grad_norm")
            .and_then(|s| s.parse().ok())
            .unwrap_or(f64::NAN);
        let iterations = meta
            .get("iterations")
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        return Ok(GroundStateResult {
            state,
            energy_per_site: energy,
            gradient_norm: grad,
            iterations,
            converged: true,
            seed: cfg.seed,
        });
    }
    let mpo = build_mpo(p)?;
    let res = vumps_ground_state(&mpo, chi, cfg.solver.tol, cfg.solver.max_iter, init, cfg.seed)?;
    if res.converged {
        store.save(p.jx, p.jz, k, chi, cfg.solver.tol, &res)?;
    }
    Ok(res)
}

/// Ground-state sweep: ascend the chi ladder, and within each level sweep K
/// outward from the bracket center so every solve warm-starts from its inner
/// neighbour. The two directions are independent and run in parallel.
pub fn run_groundstate(cfg: &ScanConfig, out_dir: &Path) -> Result<RunReport> {
    let store = CheckpointStore::new(&out_dir.join("checkpoints"))?;
    let ks = cfg.k_values()?;
    let [blo, bhi] = cfg.bracket()?;
    let center = 0.5 * (blo + bhi);

    // Split the grid at the bracket center, both halves ordered outward.
    let mut left: Vec<f64> = ks.iter().cloned().filter(|k| *k <= center).collect();
    left.sort_by(|a, b| b.total_cmp(a));
    let mut right: Vec<f64> = ks.iter().cloned().filter(|k| *k > center).collect();
    right.sort_by(|a, b| a.total_cmp(b));

    let rows = Mutex::new(Vec::<Row>::new());
    let failures = Mutex::new(Vec::<String>::new());
    // Next chi level warm-starts from this level's converged states.
    let mut carry: std::collections::HashMap<u64, UniformMps> = std::collections::HashMap::new();

    for (li, &chi) in cfg.chi_ladder.iter().enumerate() {
        let carry_ref = &carry;
        let walk = |chain: &[f64]| -> std::collections::HashMap<u64, UniformMps> {
            let mut grown: Option<UniformMps> = None;
            let mut out = std::collections::HashMap::new();
            for &k in chain {
                let init = carry_ref
                    .get(&k.to_bits())
                    .map(|s| s.grow_bond_dimension(chi))
                    .transpose()
                    .unwrap_or(None)
                    .or_else(|| grown.take());
                match solve_point(cfg, &store, k, chi, init) {
                    Ok(res) => {
                        if !res.converged {
                            failures.lock().unwrap().push(format!(
                                "K={k} chi={chi}: not converged (grad {:.3e})",
                                res.gradient_norm
                            ));
                        }
                        match align_zfm_branch(&res.state) {
                            Ok(aligned) => match gs_row(cfg, k, &res, &aligned) {
                                Ok(row) => rows.lock().unwrap().push(row),
                                Err(e) => failures
                                    .lock()
                                    .unwrap()
                                    .push(format!("K={k} chi={chi}: observables: {e}")),
                            },
                            Err(e) => failures
                                .lock()
                                .unwrap()
                                .push(format!("K={k} chi={chi}: branch align: {e}")),
                        }
                        grown = Some(res.state.clone());
                        out.insert(k.to_bits(), res.state);
                    }
                    Err(e) => {
                        failures
                            .lock()
                            .unwrap()
                            .push(format!("K={k} chi={chi}: {e}"));
                        grown = None;
                    }
                }
            }
            out
        };

        let (lmap, rmap) = rayon::join(|| walk(&left), || walk(&right));
        let _ = li;
        carry = lmap.into_iter().chain(rmap).collect();
    }

    let rows = rows.into_inner().unwrap();
    let written = append_rows(
        &out_dir.join("records.csv"),
        &cfg.content_hash(),
        cfg.seed,
        &rows,
    )?;
    Ok(RunReport {
        rows_written: written,
        failures: failures.into_inner().unwrap(),
    })
}

/// Measurement sweep over existing ground-state checkpoints.
pub fn run_measure(cfg: &ScanConfig, out_dir: &Path) -> Result<RunReport> {
    let m = cfg
        .measure
        .as_ref()
        .ok_or_else(|| anyhow!("config has no measurement block"))?;
    let store = CheckpointStore::new(&out_dir.join("checkpoints"))?;
    let ks = cfg.k_values()?;

    // Work items: (K, chi, u, alpha, pattern).
    let mut items = Vec::new();
    for &chi in &cfg.chi_ladder {
        for &k in &ks {
            for &u in &m.u {
                for &alpha in &m.alpha {
                    for pat in &m.patterns {
                        items.push((k, chi, u, alpha, pat.clone()));
                    }
                }
            }
        }
    }

    let rows = Mutex::new(Vec::<Row>::new());
    let failures = Mutex::new(Vec::<String>::new());
    let skipped = Mutex::new(Vec::<String>::new());

    use rayon::prelude::*;
    items.par_iter().try_for_each(|(k, chi, u, alpha, pat)| -> Result<()> {
        let p = cfg.model_at(*k);
        let Some((state, _meta)) = store.load(p.jx, p.jz, *k, *chi, cfg.seed, cfg.solver.tol)
        else {
            failures
                .lock()
                .unwrap()
                .push(format!("missing ground-state checkpoint for (K={k}, chi={chi})"));
            return Ok(());
        };
        let gs = align_zfm_branch(&state).context("branch alignment")?;
        let pattern = parse_pattern(pat).map_err(|e| anyhow!("{e}"))?;
        let spec = MeasurementSpec::new(m.kind, *u, *alpha, pattern)
            .map_err(|e| anyhow!("bad spec: {e}"))?;
        match apply_trajectory(&gs, &spec) {
            Ok(post) => {
                let (xi, l1, l2) = correlation_length(&post.state)?;
                let s_ent = entanglement_entropy(&post.state)?;
                let (o_vbs, o_zfm, o_zafm) = order_parameters(&post.state)?;
                let e = obs::energy_per_site_expectation(&post.state, p)?;
                rows.lock().unwrap().push(Row {
                    k: *k,
                    chi: *chi,
                    spec: Some(spec),
                    p_cell: post.born_weight_per_cell,
                    energy_per_site: e,
                    s_ent,
                    xi,
                    lambda1: l1,
                    lambda2: l2,
                    o_vbs,
                    o_zfm,
                    o_zafm,
                    grad_norm: f64::NAN,
                    iterations: 0,
                    seed: cfg.seed,
                });
            }
            Err(dqcpwm_core::Error::TrajectoryAnnihilated { weight }) => {
                skipped.lock().unwrap().push(format!(
                    "annihilated trajectory at (K={k}, chi={chi}, u={u}, alpha={alpha}, {pat}): weight {weight:.1e}"
                ));
            }
            Err(e) => {
                failures.lock().unwrap().push(format!(
                    "(K={k}, chi={chi}, u={u}, alpha={alpha}, {pat}): {e}"
                ));
            }
        }
        Ok(())
    })?;

    for s in skipped.into_inner().unwrap() {
        eprintln!("note: {s}");
    }
    let rows = rows.into_inner().unwrap();
    let written = append_rows(
        &out_dir.join("records.csv"),
        &cfg.content_hash(),
        cfg.seed,
        &rows,
    )?;
    Ok(RunReport {
        rows_written: written,
        failures: failures.into_inner().unwrap(),
    })
}

/// A checkpoint-backed, warm-started ground-state evaluator used by the
/// pseudo-critical search.
pub struct GsEvaluator<'a> {
    cfg: &'a ScanConfig,
    store: CheckpointStore,
    last: Option<(f64, UniformMps)>,
}

impl<'a> GsEvaluator<'a> {
    pub fn new(cfg: &'a ScanConfig, out_dir: &Path) -> Result<Self> {
        Ok(Self {
            cfg,
            store: CheckpointStore::new(&out_dir.join("checkpoints"))?,
            last: None,
        })
    }

    pub fn ground_state(&mut self, k: f64, chi: usize) -> Result<GroundStateResult> {
        let init = match &self.last {
            Some((_, s)) if s.chi() == chi => Some(s.clone()),
            _ => None,
        };
        let res = solve_point(self.cfg, &self.store, k, chi, init)?;
        self.last = Some((k, res.state.clone()));
        Ok(res)
    }

    pub fn xi(&mut self, k: f64, chi: usize) -> Result<f64> {
        let res = self.ground_state(k, chi)?;
        let (xi, _, _) = correlation_length(&res.state)?;
        Ok(xi)
    }
}

/// Pseudo-critical locator, scaling fits, and correlation-length gaps; one
/// report per bond dimension, written as JSON.
pub fn run_fit(cfg: &ScanConfig, out_dir: &Path) -> Result<RunReport> {
    let [blo, bhi] = cfg.bracket()?;
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    let mut crit_points: Vec<(f64, f64)> = Vec::new(); // (xi*, S*) per chi

    for &chi in &cfg.chi_ladder {
        let mut eval = GsEvaluator::new(cfg, out_dir)?;
        let kc = match locate_peak(|k| eval.xi(k, chi).map_err(core_err), blo, bhi, cfg.fit.kc_tol)
        {
            Ok(kc) => kc,
            Err(e) => {
                failures.push(format!("chi={chi}: pseudo-critical search: {e}"));
                continue;
            }
        };

        let at_kc = eval.ground_state(kc, chi)?;
        let gs_kc = align_zfm_branch(&at_kc.state).map_err(anyhow_err)?;
        let (xi_star, _, _) = correlation_length(&gs_kc).map_err(anyhow_err)?;
        let s_star = entanglement_entropy(&gs_kc).map_err(anyhow_err)?;
        crit_points.push((xi_star, s_star));

        // Gap and entropy shifts for each requested trajectory.
        let mut delta_xi = 0.0;
        let mut delta_s = Vec::new();
        if let Some(m) = &cfg.measure {
            let pattern = parse_pattern(&m.patterns[0])?;
            let u = m.u[0];
            let alpha = m.alpha[0];
            let spec = MeasurementSpec::new(m.kind, u, alpha, pattern).map_err(anyhow_err)?;
            let mut measured_xi = |k: f64| -> dqcpwm_core::Result<f64> {
                let res = eval.ground_state(k, chi).map_err(|e| {
                    dqcpwm_core::Error::Solver(format!("ground state at K={k}: {e}"))
                })?;
                let gs = align_zfm_branch(&res.state)?;
                let post = apply_trajectory(&gs, &spec)?;
                let (xi, _, _) = correlation_length(&post.state)?;
                Ok(xi)
            };
            delta_xi = obs::xi_gap(&mut measured_xi, kc, cfg.fit.delta).map_err(anyhow_err)?;

            for k in [kc - cfg.fit.delta, kc + cfg.fit.delta] {
                let res = eval.ground_state(k, chi)?;
                let gs = align_zfm_branch(&res.state).map_err(anyhow_err)?;
                let s_gs = entanglement_entropy(&gs).map_err(anyhow_err)?;
                let post = apply_trajectory(&gs, &spec).map_err(anyhow_err)?;
                let s_m = entanglement_entropy(&post.state).map_err(anyhow_err)?;
                delta_s.push(DeltaSProbe {
                    k,
                    delta_s: s_m - s_gs,
                });
            }
        }

        // Power-law fit of the VBS order parameter above the transition,
        // from this level's K grid.
        let beta_fit = {
            let ks = cfg.k_values()?;
            let mut pts = Vec::new();
            for &k in ks.iter().filter(|&&k| k > kc + cfg.fit.delta) {
                if let Ok(res) = eval.ground_state(k, chi) {
                    if let Ok((vbs, _, _)) = order_parameters(&res.state) {
                        if vbs.abs() > 1e-8 {
                            pts.push((k - kc, vbs.abs()));
                        }
                    }
                }
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            power_law_fit(&pts).ok()
        };

        reports.push(CriticalityReport {
            chi,
            kc_chi: kc,
            delta_xi,
            delta_s,
            c_fit: None, // filled below once all chi are known
            beta_fit,
        });
    }

    // Central charge across the chi ladder.
    let c_fit = {
        let mut pts = crit_points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        central_charge_fit(&pts).ok()
    };
    for r in &mut reports {
        r.c_fit = c_fit;
    }

    if reports.is_empty() {
        bail!(
            "no fit could be produced; missing cells: {}",
            failures.join("; ")
        );
    }
    for r in &reports {
        let path = out_dir.join(format!("fit_chi{:03}.json", r.chi));
        std::fs::write(&path, serde_json::to_string_pretty(r)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!(
            "chi {:3}: K_c = {:.6}, xi* = {:.3}, delta_xi = {:.4}, c = {}",
            r.chi,
            r.kc_chi,
            crit_points[reports.iter().position(|x| x.chi == r.chi).unwrap()].0,
            r.delta_xi,
            r.c_fit
                .map(|f| format!("{:.3}", f.c))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    let combined = out_dir.join("fits.json");
    std::fs::write(&combined, serde_json::to_string_pretty(&reports)?)?;

    Ok(RunReport {
        rows_written: reports.len(),
        failures,
    })
}

fn core_err(e: anyhow::Error) -> dqcpwm_core::Error {
    dqcpwm_core::Error::Solver(e.to_string())
}

fn anyhow_err(e: dqcpwm_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

/// Brute-force cross-check suite against exact diagonalization.
pub fn run_oracle() -> Result<RunReport> {
    use dqcpwm_core::ed;
    use dqcpwm_core::measure::{verify_kraus_from_unitary, verify_povm, MeasureKind, Outcome};
    use dqcpwm_core::model::ModelParams;

    let mut failures = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures.push(format!("{name}: {detail}"));
        }
    };

    // MPO contraction equals the ED ring Hamiltonian.
    for n in [4usize, 6, 8] {
        let p = ModelParams::new(0.5, 1.5, 0.54);
        let mpo = build_mpo(p)?;
        let diff = &mpo.dense_ring(n) - &ed::dense_hamiltonian(p, n, true);
        let dev = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
        check(
            &format!("mpo-ring-n{n}"),
            dev < 1e-12,
            format!("max deviation {dev:.2e}"),
        );
    }

    // POVM completeness and the unitary cross-check on a deterministic grid.
    let mut worst_povm = 0.0f64;
    let mut worst_unitary = 0.0f64;
    for kind in [MeasureKind::X, MeasureKind::Z] {
        for i in 0..10 {
            for j in 0..10 {
                let u = i as f64 * 0.05 + 0.013;
                let alpha = j as f64 * 0.01 + 0.0007;
                worst_povm = worst_povm.max(verify_povm(kind, u, alpha));
                worst_unitary = worst_unitary.max(verify_kraus_from_unitary(kind, u, alpha));
            }
        }
    }
    check("povm-completeness", worst_povm < 1e-12, format!("max deviation {worst_povm:.2e}"));
    check(
        "kraus-vs-unitary",
        worst_unitary < 1e-12,
        format!("max deviation {worst_unitary:.2e}"),
    );

    // Full-outcome probability sum on a random 6-site state.
    let n = 6;
    let state = ed::EdState::random(n, 42)?;
    let mut total = 0.0;
    for bits in 0..(1usize << n) {
        let outcomes: Vec<Outcome> = (0..n)
            .map(|j| {
                if (bits >> j) & 1 == 0 {
                    Outcome::Down
                } else {
                    Outcome::Up
                }
            })
            .collect();
        match ed::ed_apply_outcomes(&state, MeasureKind::Z, 0.23, 0.07, &outcomes) {
            Ok((_, p)) => total += p,
            Err(dqcpwm_core::Error::TrajectoryAnnihilated { .. }) => {}
            Err(e) => return Err(anyhow!("{e}")),
        }
    }
    check(
        "outcome-sum",
        (total - 1.0).abs() < 1e-10,
        format!("sum = {total:.12}"),
    );

    // Entropy sanity on the ED ground state.
    let (gs, e) = ed::ed_ground_state(ModelParams::new(0.5, 1.5, 0.54), 8)?;
    let s = ed::ed_entropy_half_chain(&gs)?;
    check(
        "ed-ground",
        e.is_finite() && s > 0.0,
        format!("E/site = {e:.6}, S(half) = {s:.4}"),
    );

    // Negative control: a corrupted MPO entry must break the equivalence.
    {
        let p = ModelParams::new(0.5, 1.5, 0.54);
        let mpo = build_mpo(p)?;
        let mut h = mpo.dense_ring(4);
        h[(0, 0)] += dqcpwm_core::C64::new(1e-3, 0.0);
        let diff = &h - &ed::dense_hamiltonian(p, 4, true);
        let dev = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
        check(
            "corrupted-mpo-detected",
            dev > 1e-4,
            format!("deviation {dev:.2e} (must be visible)"),
        );
    }

    Ok(RunReport {
        rows_written: 0,
        failures,
    })
}
