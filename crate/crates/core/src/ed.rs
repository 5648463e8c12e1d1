//! Exact diagonalization of small periodic rings: the brute-force reference
//! for the MPO, the Kraus algebra, Born probabilities, entropies, and order
//! parameters.
//!
//! Basis states are indexed little-endian (site `j` at bit `j`); bit value 0
//! is spin up, matching the convention in [`crate::model`].

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{lowest_eigpair, svd, FnMap};
use crate::measure::{KrausSet, MeasurementSpec, Outcome};
use crate::model::ModelParams;
use crate::C64;

/// Maximum ring size: keeps dense cross-checks and full-outcome
/// enumerations tractable.
pub const MAX_SITES: usize = 14;

/// A normalized state of an `n`-site ring.
#[derive(Debug, Clone)]
pub struct EdState {
    n: usize,
    amps: Array1<C64>,
}

impl EdState {
    pub fn new(n: usize, amps: Array1<C64>) -> Result<Self> {
        check_n(n)?;
        if amps.len() != 1 << n {
            return Err(Error::shape(format!("2^{n} amplitudes"), format!("{}", amps.len())));
        }
        let norm = norm(&amps);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFinite { op: "ed state" });
        }
        Ok(Self {
            n,
            amps: amps.mapv(|z| z / norm),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amps(&self) -> &Array1<C64> {
        &self.amps
    }

    /// Deterministic random state.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let amps = Array1::from_shape_fn(1 << n, |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        Self::new(n, amps)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 || n > MAX_SITES || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "ring size must be even and between 4 and {MAX_SITES}, got {n}"
        )));
    }
    Ok(())
}

fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn z_of(bits: usize, j: usize) -> f64 {
    if (bits >> j) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Matrix-free action of the ring Hamiltonian.
pub fn apply_hamiltonian(p: ModelParams, n: usize, psi: ArrayView1<C64>) -> Array1<C64> {
    let dim = 1usize << n;
    let mut out = Array1::<C64>::zeros(dim);
    for b in 0..dim {
        let amp = psi[b];
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut diag = 0.0;
        for j in 0..n {
            let j1 = (j + 1) % n;
            let j2 = (j + 2) % n;
            diag += -p.jz * z_of(b, j) * z_of(b, j1);
            diag += p.k * z_of(b, j) * z_of(b, j2);
            // sx sx flips the pair regardless of its state.
            out[b ^ ((1 << j) | (1 << j1))] += amp * (-p.jx);
            out[b ^ ((1 << j) | (1 << j2))] += amp * p.k;
        }
        out[b] += amp * diag;
    }
    out
}

/// Dense ring (or open-chain) Hamiltonian, for cross-checks against the MPO
/// contraction.
pub fn dense_hamiltonian(p: ModelParams, n: usize, periodic: bool) -> Array2<C64> {
    let dim = 1usize << n;
    let mut h = Array2::<C64>::zeros((dim, dim));
    let bond = |h: &mut Array2<C64>, j: usize, k: usize, cxx: f64, czz: f64| {
        for b in 0..dim {
            h[(b, b)] += C64::new(czz * z_of(b, j) * z_of(b, k), 0.0);
            h[(b ^ ((1 << j) | (1 << k)), b)] += C64::new(cxx, 0.0);
        }
    };
    let last = if periodic { n } else { n - 1 };
    for j in 0..last {
        bond(&mut h, j, (j + 1) % n, -p.jx, -p.jz);
    }
    let last2 = if periodic {
        n
    } else {
        n.saturating_sub(2)
    };
    for j in 0..last2 {
        bond(&mut h, j, (j + 2) % n, p.k, p.k);
    }
    h
}

/// Ground state of the periodic ring via Lanczos on the matrix-free action.
pub fn ed_ground_state(p: ModelParams, n: usize) -> Result<(EdState, f64)> {
    check_n(n)?;
    p.validate()?;
    let dim = 1usize << n;
    let map = FnMap {
        dim,
        f: |v: ArrayView1<C64>| apply_hamiltonian(p, n, v),
    };
    let v0 = EdState::random(n, 0x6564_0001 + n as u64)?.amps;
    let (e0, vec) = lowest_eigpair(&map, v0.view(), 1e-10, 600)?;
    Ok((EdState::new(n, vec)?, e0 / n as f64))
}

/// Applies one Kraus operator per site for an arbitrary outcome string;
/// returns the renormalized state and the trajectory probability (squared
/// norm before renormalization).
pub fn ed_apply_outcomes(
    s: &EdState,
    kind: crate::measure::MeasureKind,
    u: f64,
    alpha: f64,
    outcomes: &[Outcome],
) -> Result<(EdState, f64)> {
    if outcomes.len() != s.n {
        return Err(Error::invalid(format!(
            "outcome string length {} != ring size {}",
            outcomes.len(),
            s.n
        )));
    }
    let set = KrausSet::new(kind, u, alpha);
    let mut amps = s.amps.clone();
    for (j, o) in outcomes.iter().enumerate() {
        let m = set.get(*o);
        let dim = amps.len();
        let mut next = Array1::<C64>::zeros(dim);
        let mask = 1usize << j;
        for b in 0..dim {
            let amp = amps[b];
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let sj = (b >> j) & 1;
            for sp in 0..2usize {
                let w = m[(sp, sj)];
                if w.norm() == 0.0 {
                    continue;
                }
                let target = if sp == sj { b } else { b ^ mask };
                next[target] += w * amp;
            }
        }
        amps = next;
    }
    let p = amps.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if p < 1e-300 {
        return Err(Error::TrajectoryAnnihilated { weight: p });
    }
    Ok((EdState::new(s.n, amps)?, p))
}

/// Applies a two-site measurement pattern tiled around the ring.
pub fn ed_apply_kraus(s: &EdState, spec: &MeasurementSpec) -> Result<(EdState, f64)> {
    spec.validate()?;
    if s.n % 2 != 0 {
        return Err(Error::invalid("ring size must be a multiple of the cell"));
    }
    let outcomes: Vec<Outcome> = (0..s.n).map(|j| spec.pattern[j % 2]).collect();
    ed_apply_outcomes(s, spec.kind, spec.u, spec.alpha, &outcomes)
}

/// Half-chain von Neumann entropy (sites `0..n/2` against the rest).
pub fn ed_entropy_half_chain(s: &EdState) -> Result<f64> {
    let half = s.n / 2;
    let rows = 1usize << half;
    let mut m = Array2::<C64>::zeros((rows, rows));
    for b in 0..s.amps.len() {
        let a = b & (rows - 1);
        let rest = b >> half;
        m[(a, rest)] = s.amps[b];
    }
    let (_, sv, _) = svd(&m)?;
    let mut ent = 0.0;
    for x in sv.iter() {
        let p = x * x;
        if p > 0.0 {
            ent -= p * p.ln();
        }
    }
    Ok(ent)
}

/// Ring-averaged order parameters `(o_vbs, o_zfm, o_zafm)`, matching the
/// unit-cell definitions in [`crate::obs`].
pub fn ed_order_parameters(s: &EdState) -> (f64, f64, f64) {
    let n = s.n;
    let mut zs = vec![0.0f64; n];
    for (b, amp) in s.amps.iter().enumerate() {
        let w = amp.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (j, zj) in zs.iter_mut().enumerate() {
            *zj += w * z_of(b, j);
        }
    }
    let o_zfm: f64 = zs.iter().sum::<f64>() / n as f64;
    let o_zafm: f64 = zs
        .iter()
        .enumerate()
        .map(|(j, z)| if j % 2 == 0 { -z } else { *z })
        .sum::<f64>()
        / n as f64;

    // sigma.sigma on every nearest-neighbour bond.
    let mut bonds = vec![0.0f64; n];
    for (j, bj) in bonds.iter_mut().enumerate() {
        let j1 = (j + 1) % n;
        let mut acc = C64::new(0.0, 0.0);
        for (b, amp) in s.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            // zz diagonal part.
            acc += amp.conj() * amp * z_of(b, j) * z_of(b, j1);
            // xx flips the pair; yy flips with a sign on aligned pairs.
            let flipped = b ^ ((1 << j) | (1 << j1));
            let aligned = ((b >> j) & 1) == ((b >> j1) & 1);
            let yy = if aligned { -1.0 } else { 1.0 };
            acc += s.amps[flipped].conj() * amp * (1.0 + yy);
        }
        *bj = acc.re;
    }
    let o_vbs: f64 = bonds
        .iter()
        .enumerate()
        .map(|(j, b)| if j % 2 == 0 { *b } else { -b })
        .sum::<f64>()
        * 2.0
        / n as f64;
    (o_vbs, o_zfm, o_zafm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureKind;
    use crate::model::build_mpo;
    use ndarray_linalg::{Eigh, UPLO};

    fn max_abs(m: &Array2<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn classical_ising_ring() {
        // jx = 0, k = 0: diagonal Hamiltonian, ground energy -jz per site.
        let (state, e) = ed_ground_state(ModelParams::new(0.0, 1.5, 0.0), 4).unwrap();
        assert!((e + 1.5).abs() < 1e-10, "energy {e}");
        // Ground space is spanned by the two polarized states.
        let amps = state.amps();
        let w: f64 = amps[0].norm_sqr() + amps[15].norm_sqr();
        assert!((w - 1.0).abs() < 1e-8, "weight on polarized states {w}");
    }

    #[test]
    fn lanczos_matches_dense() {
        let p = ModelParams::new(0.5, 1.5, 0.0);
        let (_, e) = ed_ground_state(p, 4).unwrap();
        let h = dense_hamiltonian(p, 4, true);
        let (vals, _) = h.eigh(UPLO::Lower).unwrap();
        let e_dense = vals.iter().cloned().fold(f64::INFINITY, f64::min) / 4.0;
        assert!((e - e_dense).abs() < 1e-10);

        let p2 = ModelParams::new(0.5, 1.5, 0.54);
        let (_, e2) = ed_ground_state(p2, 8).unwrap();
        let h2 = dense_hamiltonian(p2, 8, true);
        let (vals2, _) = h2.eigh(UPLO::Lower).unwrap();
        let e2_dense = vals2.iter().cloned().fold(f64::INFINITY, f64::min) / 8.0;
        assert!((e2 - e2_dense).abs() < 1e-10);
    }

    #[test]
    fn mpo_matches_ed_dense() {
        for (p, n) in [
            (ModelParams::new(0.5, 1.5, 0.0), 4usize),
            (ModelParams::new(0.5, 1.5, 0.54), 6),
        ] {
            let mpo = build_mpo(p).unwrap();
            let diff = &mpo.dense_ring(n) - &dense_hamiltonian(p, n, true);
            assert!(max_abs(&diff) < 1e-12, "n = {n}");
            let diff_open = &mpo.dense_open(n) - &dense_hamiltonian(p, n, false);
            assert!(max_abs(&diff_open) < 1e-12, "open n = {n}");
        }
    }

    #[test]
    fn kraus_probability_alpha_zero() {
        // alpha = 0, pattern (down down): operators are cos(pi u) * 1, so
        // the probability is cos^{2n}(pi u) on any state.
        let s = EdState::random(6, 3).unwrap();
        let u = 0.17;
        let spec = MeasurementSpec::new(
            MeasureKind::Z,
            u,
            0.0,
            [Outcome::Down, Outcome::Down],
        )
        .unwrap();
        let (_, prob) = ed_apply_kraus(&s, &spec).unwrap();
        let expect = (u * std::f64::consts::PI).cos().powi(12);
        assert!((prob - expect).abs() < 1e-12);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let n = 6;
        let s = EdState::random(n, 11).unwrap();
        for (kind, u, alpha) in [
            (MeasureKind::Z, 0.23, 0.07),
            (MeasureKind::X, 0.4, 0.13),
        ] {
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
                match ed_apply_outcomes(&s, kind, u, alpha, &outcomes) {
                    Ok((_, p)) => total += p,
                    Err(Error::TrajectoryAnnihilated { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
            assert!((total - 1.0).abs() < 1e-10, "total {total}");
        }
    }

    #[test]
    fn entropy_of_product_and_singlet() {
        let n = 4;
        // Product state.
        let mut amps = Array1::<C64>::zeros(1 << n);
        amps[0] = C64::new(1.0, 0.0);
        let s = EdState::new(n, amps).unwrap();
        assert!(ed_entropy_half_chain(&s).unwrap().abs() < 1e-12);

        // Singlet across the half cut (sites 1 and 2), product elsewhere.
        let mut amps = Array1::<C64>::zeros(1 << n);
        let b_up_down = 1 << 2; // site1 up, site2 down
        let b_down_up = 1 << 1;
        amps[b_up_down] = C64::new(1.0 / 2.0_f64.sqrt(), 0.0);
        amps[b_down_up] = C64::new(-1.0 / 2.0_f64.sqrt(), 0.0);
        let s = EdState::new(n, amps).unwrap();
        let ent = ed_entropy_half_chain(&s).unwrap();
        assert!((ent - 2.0_f64.ln()).abs() < 1e-12, "entropy {ent}");
    }

    #[test]
    fn order_parameters_reference_states() {
        let n = 8;
        // Polarized up.
        let mut amps = Array1::<C64>::zeros(1 << n);
        amps[0] = C64::new(1.0, 0.0);
        let s = EdState::new(n, amps).unwrap();
        let (vbs, zfm, zafm) = ed_order_parameters(&s);
        assert!(vbs.abs() < 1e-12 && (zfm - 1.0).abs() < 1e-12 && zafm.abs() < 1e-12);

        // Neel: down on even sites.
        let mut bits = 0usize;
        for j in (0..n).step_by(2) {
            bits |= 1 << j;
        }
        let mut amps = Array1::<C64>::zeros(1 << n);
        amps[bits] = C64::new(1.0, 0.0);
        let s = EdState::new(n, amps).unwrap();
        let (vbs, zfm, zafm) = ed_order_parameters(&s);
        assert!(vbs.abs() < 1e-12 && zfm.abs() < 1e-12);
        assert!((zafm.abs() - 1.0).abs() < 1e-12);

        // Dimer product of singlets on bonds (0,1), (2,3), ...
        let mut amps = Array1::<C64>::zeros(1 << n);
        for b in 0..(1usize << n) {
            let mut coeff = C64::new(1.0, 0.0);
            let mut ok = true;
            for j in (0..n).step_by(2) {
                let s0 = (b >> j) & 1;
                let s1 = (b >> (j + 1)) & 1;
                if s0 == s1 {
                    ok = false;
                    break;
                }
                // (up down - down up)/sqrt(2)
                let sign = if s0 == 0 { 1.0 } else { -1.0 };
                coeff *= C64::new(sign / 2.0_f64.sqrt(), 0.0);
            }
            if ok {
                amps[b] = coeff;
            }
        }
        let s = EdState::new(n, amps).unwrap();
        let (vbs, zfm, zafm) = ed_order_parameters(&s);
        assert!((vbs.abs() - 3.0).abs() < 1e-10, "vbs {vbs}");
        assert!(zfm.abs() < 1e-12 && zafm.abs() < 1e-12);
    }

    #[test]
    fn z_up_down_preserves_zfm_at_alpha_zero() {
        // The Z (up down) operators at alpha = 0 are proportional to sz on
        // odd sites, which commutes with every sz: magnetization preserved.
        let n = 8;
        let (gs, _) = ed_ground_state(ModelParams::new(0.5, 1.5, 0.2), n).unwrap();
        let (_, zfm0, _) = ed_order_parameters(&gs);
        let spec = MeasurementSpec::new(
            MeasureKind::Z,
            0.21,
            0.0,
            [Outcome::Up, Outcome::Down],
        )
        .unwrap();
        let (after, _) = ed_apply_kraus(&gs, &spec).unwrap();
        let (_, zfm1, _) = ed_order_parameters(&after);
        assert!((zfm0.abs() - zfm1.abs()).abs() < 1e-10);
    }
}
