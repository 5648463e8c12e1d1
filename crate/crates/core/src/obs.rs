//! Physical observables of a mixed-canonical uniform MPS: correlation
//! length, bipartite entanglement entropy, order parameters, scaling fits,
//! and the pseudo-critical locator.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigs, svd};
use crate::measure::MeasurementSpec;
use crate::model::{pauli, ModelParams, Pauli, CELL};
use crate::umps::{flatten, site_mat, CellTransfer, UniformMps};
use crate::C64;

/// One row of a sweep: the coupling/bond-dimension point, the optional
/// trajectory, and every measured quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub k: f64,
    pub chi: usize,
    pub spec: Option<MeasurementSpec>,
    pub s_ent: f64,
    pub xi: f64,
    pub o_vbs: f64,
    pub o_zfm: f64,
    pub o_zafm: f64,
    pub p_cell: f64,
    pub energy_per_site: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Linear fit of entropy against log correlation length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CentralChargeFit {
    pub c: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Log-log power-law fit of an order parameter against distance to the
/// pseudo-critical coupling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub beta: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

/// Entropy shift of a post-measurement state at one probe coupling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaSProbe {
    pub k: f64,
    pub delta_s: f64,
}

/// Per-chi criticality summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub chi: usize,
    pub kc_chi: f64,
    pub delta_xi: f64,
    pub delta_s: Vec<DeltaSProbe>,
    pub c_fit: Option<CentralChargeFit>,
    pub beta_fit: Option<PowerLawFit>,
}

/// Correlation length from the unit-cell transfer spectrum:
/// `xi = -n / ln(|lambda2| / |lambda1|)` with `n = 2` spins per cell.
/// Returns `(xi, |lambda1|, |lambda2|)`; a chi = 1 product state has
/// `xi = 0` by convention.
pub fn correlation_length(state: &UniformMps) -> Result<(f64, f64, f64)> {
    let chi = state.chi();
    if chi == 1 {
        let map = CellTransfer::new(vec![state.a_l(0), state.a_l(1)]);
        let eye = Array2::<C64>::eye(1);
        let l1 = dominant_eigs(&map, 1, flatten(&eye).view(), 1e-11)?[0]
            .value
            .norm();
        return Ok((0.0, l1, 0.0));
    }
    let dim = chi * chi;
    let k = 4.min(dim);
    let map = CellTransfer::new(vec![state.a_l(0), state.a_l(1)]);
    let eye = Array2::<C64>::eye(chi);
    let pairs = dominant_eigs(&map, k, flatten(&eye).view(), 1e-10)?;
    let l1 = pairs[0].value.norm();
    let l2 = pairs[1].value.norm();
    if l1 <= 0.0 {
        return Err(Error::TrajectoryAnnihilated { weight: l1 });
    }
    let ratio = l2 / l1;
    if ratio > 1.0 - 1e-12 {
        return Err(Error::DegenerateTransfer { ratio });
    }
    if l2 == 0.0 {
        return Ok((0.0, l1, 0.0));
    }
    let xi = -(CELL as f64) / ratio.ln();
    Ok((xi, l1, l2))
}

/// Spatially averaged von Neumann entanglement entropy (nats): the mean of
/// the bipartite entropies at the two unit-cell bonds, read off the Schmidt
/// spectra of the center matrices.
pub fn entanglement_entropy(state: &UniformMps) -> Result<f64> {
    let mut total = 0.0;
    for bond in 0..CELL {
        let (_, s, _) = svd(state.c(bond))?;
        let norm: f64 = s.iter().map(|x| x * x).sum();
        let mut ent = 0.0;
        for x in s.iter() {
            let p = x * x / norm;
            if p > 0.0 {
                ent -= p * p.ln();
            }
        }
        total += ent;
    }
    Ok(total / CELL as f64)
}

/// Expectation of a one-site operator at unit-cell site `i`.
fn one_site(state: &UniformMps, site: usize, op: &Array2<C64>) -> C64 {
    let ac = state.a_c(site);
    let mut acc = C64::new(0.0, 0.0);
    for sb in 0..2 {
        for sk in 0..2 {
            let w = op[(sb, sk)];
            if w.norm() == 0.0 {
                continue;
            }
            // tr(A_C(sb)^H A_C(sk))
            let mb = site_mat(&ac, sb);
            let mk = site_mat(&ac, sk);
            let t: C64 = mb.iter().zip(mk.iter()).map(|(a, b)| a.conj() * b).sum();
            acc += w * t;
        }
    }
    acc
}

/// Expectation of a product of one-site operators on a window of adjacent
/// sites starting at unit-cell site `start`. The window is represented as
/// `A_C` on the first site followed by right-canonical tensors.
fn window(state: &UniformMps, start: usize, ops: &[&Array2<C64>]) -> C64 {
    // Build ket tensors of the window with operators applied, and the plain
    // bra tensors; contract left-to-right with the open bra/ket bond pair.
    let chi = state.chi();
    let mut kets: Vec<Array3<C64>> = Vec::with_capacity(ops.len());
    let mut bras: Vec<Array3<C64>> = Vec::with_capacity(ops.len());
    for (j, op) in ops.iter().enumerate() {
        let site = (start + j) % CELL;
        let base = if j == 0 {
            state.a_c(site)
        } else {
            state.a_r(site).clone()
        };
        kets.push(crate::umps::apply_phys(&base, op));
        bras.push(base);
    }
    // env[x_bra, x_ket] starting from identity on the left.
    let mut env = Array2::<C64>::eye(chi);
    for (ket, bra) in kets.iter().zip(bras.iter()) {
        let mut next = Array2::<C64>::zeros((chi, chi));
        for s in 0..2 {
            let mb = site_mat(bra, s);
            let mk = site_mat(ket, s);
            next += &mb.t().mapv(|z| z.conj()).dot(&env).dot(&mk);
        }
        env = next;
    }
    env.diag().iter().sum()
}

/// Nearest-neighbour `sigma . sigma` on the bond starting at site `i`.
fn bond_dot(state: &UniformMps, start: usize) -> C64 {
    let sx = pauli(Pauli::X);
    let sy = pauli(Pauli::Y);
    let sz = pauli(Pauli::Z);
    let mut acc = C64::new(0.0, 0.0);
    for op in [&sx, &sy, &sz] {
        acc += window(state, start, &[op, op]);
    }
    acc
}

/// The three order parameters `(o_vbs, o_zfm, o_zafm)`, cell-averaged with
/// the alternating phase `exp(i pi j)` referenced to the first unit-cell
/// site at `j = 1`.
pub fn order_parameters(state: &UniformMps) -> Result<(f64, f64, f64)> {
    let sz = pauli(Pauli::Z);
    let z0 = one_site(state, 0, &sz);
    let z1 = one_site(state, 1, &sz);
    let e01 = bond_dot(state, 0);
    let e10 = bond_dot(state, 1);

    let o_zfm = 0.5 * (z0 + z1);
    let o_zafm = 0.5 * (-z0 + z1);
    let o_vbs = e01 - e10;

    for (name, v) in [("o_vbs", o_vbs), ("o_zfm", o_zfm), ("o_zafm", o_zafm)] {
        if v.im.abs() > 1e-10 {
            return Err(Error::Solver(format!(
                "{name} has imaginary residue {:.3e}",
                v.im
            )));
        }
    }
    Ok((o_vbs.re, o_zfm.re, o_zafm.re))
}

/// Energy per site from direct two- and three-site window expectations,
/// independent of the environment-based route in the solver.
pub fn energy_per_site_expectation(state: &UniformMps, p: ModelParams) -> Result<f64> {
    let sx = pauli(Pauli::X);
    let sz = pauli(Pauli::Z);
    let id = pauli(Pauli::Id);
    let mut e = C64::new(0.0, 0.0);
    for i in 0..CELL {
        let xx = window(state, i, &[&sx, &sx]);
        let zz = window(state, i, &[&sz, &sz]);
        e += xx.scale(-p.jx) + zz.scale(-p.jz);
        let xix = window(state, i, &[&sx, &id, &sx]);
        let ziz = window(state, i, &[&sz, &id, &sz]);
        e += (xix + ziz).scale(p.k);
    }
    if e.im.abs() > 1e-8 {
        return Err(Error::Solver(format!(
            "energy expectation has imaginary residue {:.3e}",
            e.im
        )));
    }
    Ok(e.re / CELL as f64)
}

/// Flips the spin-z broken-symmetry branch (a global on-site `sx` rotation,
/// a symmetry of the Hamiltonian) so that `o_zfm >= 0`.
pub fn align_zfm_branch(state: &UniformMps) -> Result<UniformMps> {
    let (_, o_zfm, _) = order_parameters(state)?;
    if o_zfm < 0.0 {
        let sx = pauli(Pauli::X);
        state.apply_onsite([&sx, &sx])
    } else {
        Ok(state.clone())
    }
}

/// Least-squares line of `s_ent` against `ln(xi)`; the central charge is six
/// times the slope.
pub fn central_charge_fit(points: &[(f64, f64)]) -> Result<CentralChargeFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Fit("xi values must be strictly increasing".into()));
        }
    }
    if points.iter().any(|(xi, _)| *xi <= 0.0) {
        return Err(Error::Fit("xi values must be positive".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|(xi, s)| (xi.ln(), *s)).collect();
    let (slope, intercept, r2) = line_fit(&xy);
    Ok(CentralChargeFit {
        c: 6.0 * slope,
        intercept,
        r_squared: r2,
    })
}

/// Log-log least squares of `order ~ amplitude * x^beta`.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(Error::Fit("power-law fit needs positive coordinates".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept, r2) = line_fit(&xy);
    Ok(PowerLawFit {
        beta: slope,
        amplitude: intercept.exp(),
        r_squared: r2,
    })
}

fn line_fit(xy: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = xy.len() as f64;
    let sx: f64 = xy.iter().map(|(x, _)| x).sum();
    let sy: f64 = xy.iter().map(|(_, y)| y).sum();
    let mx = sx / n;
    let my = sy / n;
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy
        .iter()
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let ss_tot: f64 = xy.iter().map(|(_, y)| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Locates the maximum of `f` (e.g. the correlation length as a function of
/// the coupling) inside `[lo, hi]` by golden-section search, terminating at
/// bracket width `tol`. Fails if the maximum sits at a bracket edge.
pub fn locate_peak(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(hi > lo) || tol <= 0.0 {
        return Err(Error::invalid("bad bracket or tolerance"));
    }
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1)?;
        }
        let (x, v) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        if v > best.1 {
            best = (x, v);
        }
    }
    if f_lo >= best.1 {
        return Err(Error::BracketEdge { at_edge: lo });
    }
    if f_hi >= best.1 {
        return Err(Error::BracketEdge { at_edge: hi });
    }
    Ok(0.5 * (a + b))
}

/// Two-sided correlation-length gap `|f(kc - delta) - f(kc + delta)|`, where
/// `f` evaluates the post-measurement correlation length warm-started from
/// within the corresponding phase.
pub fn xi_gap(mut f: impl FnMut(f64) -> Result<f64>, kc: f64, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::invalid("delta must be positive"));
    }
    let lo = f(kc - delta).map_err(|e| Error::Solver(format!("low-K side: {e}")))?;
    let hi = f(kc + delta).map_err(|e| Error::Solver(format!("high-K side: {e}")))?;
    Ok((lo - hi).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::umps::random_umps;
    use ndarray::Array3;

    #[test]
    fn xi_arithmetic() {
        // lambda1 = 1, lambda2 = 0.9 -> xi = -2 / ln 0.9.
        let expect = -2.0 / 0.9f64.ln();
        assert!((expect - 18.982_443_162_059_81).abs() < 1e-12);
    }

    #[test]
    fn product_state_has_zero_xi_and_entropy() {
        let s = random_umps(1, 4).unwrap();
        let (xi, l1, l2) = correlation_length(&s).unwrap();
        assert_eq!(xi, 0.0);
        assert!((l1 - 1.0).abs() < 1e-10);
        assert_eq!(l2, 0.0);
        assert!(entanglement_entropy(&s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn xi_invariant_under_bond_exchange() {
        let s = random_umps(6, 19).unwrap();
        let (xi01, _, _) = correlation_length(&s).unwrap();
        // Exchange the unit-cell bond seeding the transfer map by rotating
        // the cell: sites (1, 0) instead of (0, 1).
        let map = CellTransfer::new(vec![s.a_l(1), s.a_l(0)]);
        let eye = ndarray::Array2::<C64>::eye(s.chi());
        let pairs = dominant_eigs(&map, 2, flatten(&eye).view(), 1e-10).unwrap();
        let ratio = pairs[1].value.norm() / pairs[0].value.norm();
        let xi10 = -(CELL as f64) / ratio.ln();
        assert!(((xi01 - xi10) / xi01).abs() < 1e-8);
    }

    /// Builds the mixed-canonical form of an explicit two-site product cell
    /// `|a> (x) |b>`.
    fn product_cell(a: [f64; 2], b: [f64; 2]) -> UniformMps {
        let mk = |v: [f64; 2]| {
            let mut t = Array3::<C64>::zeros((1, 2, 1));
            t[(0, 0, 0)] = C64::new(v[0], 0.0);
            t[(0, 1, 0)] = C64::new(v[1], 0.0);
            t
        };
        crate::umps::mixed_canonicalize(&[mk(a), mk(b)]).unwrap()
    }

    #[test]
    fn polarized_and_neel_order_parameters() {
        let up = product_cell([1.0, 0.0], [1.0, 0.0]);
        let (vbs, zfm, zafm) = order_parameters(&up).unwrap();
        assert!(vbs.abs() < 1e-10);
        assert!((zfm - 1.0).abs() < 1e-10);
        assert!(zafm.abs() < 1e-10);

        let neel = product_cell([1.0, 0.0], [0.0, 1.0]);
        let (vbs, zfm, zafm) = order_parameters(&neel).unwrap();
        assert!(vbs.abs() < 1e-10);
        assert!(zfm.abs() < 1e-10);
        assert!((zafm.abs() - 1.0).abs() < 1e-10);
    }

    /// chi = 2 dimer state: singlets on the (0,1) bonds, product across the
    /// (1,0) bonds. Non-injective at the boundary bond, so it is written
    /// down directly in canonical form (with completed dead directions)
    /// rather than gauge-fixed numerically.
    fn dimer_state() -> UniformMps {
        let r = |x: f64| C64::new(x, 0.0);
        let h = 1.0 / 2.0_f64.sqrt();

        // Site 0 opens the singlet.
        let mut al0 = Array3::<C64>::zeros((2, 2, 2));
        al0[(0, 0, 0)] = r(1.0);
        al0[(0, 1, 1)] = r(1.0);
        // Site 1 closes it: (|up down> - |down up>)/sqrt(2); the second
        // column is a dead direction completed to keep the isometry exact.
        let mut al1 = Array3::<C64>::zeros((2, 2, 2));
        al1[(0, 1, 0)] = r(h);
        al1[(1, 0, 0)] = r(-h);
        al1[(0, 0, 1)] = r(1.0);

        let mut ar0 = Array3::<C64>::zeros((2, 2, 2));
        ar0[(0, 0, 0)] = r(h);
        ar0[(0, 1, 1)] = r(h);
        ar0[(1, 0, 1)] = r(1.0);
        let mut ar1 = Array3::<C64>::zeros((2, 2, 2));
        ar1[(0, 1, 0)] = r(1.0);
        ar1[(1, 0, 0)] = r(-1.0);

        let mut c0 = ndarray::Array2::<C64>::zeros((2, 2));
        c0[(0, 0)] = r(h);
        c0[(1, 1)] = r(h);
        let mut c1 = ndarray::Array2::<C64>::zeros((2, 2));
        c1[(0, 0)] = r(1.0);

        let s = UniformMps::from_parts([al0, al1], [ar0, ar1], [c0, c1]).unwrap();
        assert!(s.gauge_residuals().max() < 1e-12);
        s
    }

    #[test]
    fn dimer_state_vbs_order_and_entropy() {
        let s = dimer_state();
        let (vbs, zfm, zafm) = order_parameters(&s).unwrap();
        assert!((vbs.abs() - 3.0).abs() < 1e-9, "vbs {vbs}");
        assert!(zfm.abs() < 1e-10);
        assert!(zafm.abs() < 1e-10);
        // Entropy: ln 2 on the singlet bond, 0 on the product bond.
        let s_ent = entanglement_entropy(&s).unwrap();
        assert!((s_ent - 0.5 * 2.0_f64.ln()).abs() < 1e-10, "s {s_ent}");
    }

    #[test]
    fn schmidt_pair_entropy() {
        // C with Schmidt values (1/sqrt2, 1/sqrt2) on both bonds -> ln 2.
        let s = dimer_state();
        let (_, sv, _) = crate::linalg::svd(s.c(0)).unwrap();
        let inner: Vec<f64> = sv.iter().cloned().collect();
        assert!((inner[0] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-10);
        assert!((inner[1] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn central_charge_fit_exact_line() {
        let pts: Vec<(f64, f64)> = (1..8)
            .map(|i| {
                let xi = (i as f64) * 3.0;
                (xi, xi.ln() / 6.0 + 0.2)
            })
            .collect();
        let fit = central_charge_fit(&pts).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-10);
        assert!((fit.intercept - 0.2).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let pts2: Vec<(f64, f64)> = (1..8)
            .map(|i| {
                let xi = (i as f64) * 3.0;
                (xi, xi.ln() / 12.0)
            })
            .collect();
        assert!((central_charge_fit(&pts2).unwrap().c - 0.5).abs() < 1e-10);

        assert!(central_charge_fit(&pts[..2]).is_err());
    }

    #[test]
    fn power_law_fit_exact() {
        let pts: Vec<(f64, f64)> = (1..10)
            .map(|i| {
                let x = 0.01 * i as f64;
                (x, 2.0 * x.powf(0.3))
            })
            .collect();
        let fit = power_law_fit(&pts).unwrap();
        assert!((fit.beta - 0.3).abs() < 1e-10);
        assert!((fit.amplitude - 2.0).abs() < 1e-10);

        let flat: Vec<(f64, f64)> = (1..10).map(|i| (0.01 * i as f64, 2.0)).collect();
        assert!((power_law_fit(&flat).unwrap().beta).abs() < 1e-12);

        let bad = vec![(0.1, -1.0), (0.2, 1.0), (0.3, 1.0)];
        assert!(power_law_fit(&bad).is_err());
    }

    #[test]
    fn golden_section_finds_synthetic_peak() {
        let f = |k: f64| Ok(-(k - 0.55_f64).powi(2));
        let kc = locate_peak(f, 0.50, 0.60, 1e-5).unwrap();
        assert!((kc - 0.55).abs() < 1e-5);

        // Peak at the edge must fail.
        let g = |k: f64| Ok(k);
        assert!(matches!(
            locate_peak(g, 0.0, 1.0, 1e-4),
            Err(Error::BracketEdge { .. })
        ));
    }

    #[test]
    fn xi_gap_of_smooth_function_is_small() {
        let f = |k: f64| Ok(100.0 - (k - 0.55_f64).powi(2) * 1000.0);
        let gap = xi_gap(f, 0.55, 1e-3).unwrap();
        assert!(gap < 1e-9);
    }

    #[test]
    fn energy_expectation_matches_dual_route() {
        use crate::model::{build_mpo, ModelParams};
        use crate::vumps::{environment_energy, vumps_ground_state};
        let p = ModelParams::new(0.5, 1.5, 0.3);
        let mpo = build_mpo(p).unwrap();
        let res = vumps_ground_state(&mpo, 6, 1e-9, 400, None, 7).unwrap();
        let e_env = environment_energy(&res.state, &mpo).unwrap();
        let e_exp = energy_per_site_expectation(&res.state, p).unwrap();
        assert!(
            (e_env - e_exp).abs() < 1e-7,
            "environment {e_env} vs expectation {e_exp}"
        );
    }
}
