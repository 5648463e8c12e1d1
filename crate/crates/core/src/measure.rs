//! Ancilla-mediated weak measurement: Kraus operator families for the two
//! unitary couplings, POVM checks, Born weights, and trajectory application
//! to a uniform MPS.
//!
//! Angles `u` and `alpha` are given in units of pi throughout. Each chain
//! spin is coupled to one ancilla spin prepared in the down state; the
//! ancilla is then measured in its z basis, leaving the 2x2 operator
//! `M^(outcome, down)` on the chain site. The closed forms below are written
//! in the measurement-basis ordering with the down state first; they are
//! stored and applied verbatim, and every consumer in the crate uses the
//! same matrices, so the convention is globally consistent.

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dagger, dominant_eigs};
use crate::model::CELL;
use crate::umps::{apply_phys, flatten, mixed_canonicalize, CellTransfer, UniformMps};
use crate::C64;

/// Which system operator enters the chain-ancilla coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    X,
    Z,
}

/// Projective result for one ancilla spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Down,
    Up,
}

/// One measurement trajectory on the two-site unit cell: operator kind,
/// unitary angle `u`, strength `alpha` (both in units of pi), and the
/// per-cell outcome pattern, repeated periodically over the chain. All
/// ancillas start in the down state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub kind: MeasureKind,
    pub u: f64,
    pub alpha: f64,
    pub pattern: [Outcome; CELL],
}

impl MeasurementSpec {
    pub fn new(kind: MeasureKind, u: f64, alpha: f64, pattern: [Outcome; CELL]) -> Result<Self> {
        let s = Self {
            kind,
            u,
            alpha,
            pattern,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.u.is_finite() || !self.alpha.is_finite() {
            return Err(Error::invalid("non-finite measurement angles"));
        }
        if self.alpha < 0.0 {
            return Err(Error::invalid("alpha must be non-negative"));
        }
        Ok(())
    }

    /// Pattern as a compact string, e.g. `dd`, `ud`.
    pub fn pattern_label(&self) -> String {
        self.pattern
            .iter()
            .map(|o| match o {
                Outcome::Down => 'd',
                Outcome::Up => 'u',
            })
            .collect()
    }
}

/// The pair of Kraus operators for a given coupling, with the POVM
/// completeness residual available for checking.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub kind: MeasureKind,
    pub u: f64,
    pub alpha: f64,
    pub m_down: Array2<C64>,
    pub m_up: Array2<C64>,
}

impl KrausSet {
    pub fn new(kind: MeasureKind, u: f64, alpha: f64) -> Self {
        Self {
            kind,
            u,
            alpha,
            m_down: kraus(kind, Outcome::Down, u, alpha),
            m_up: kraus(kind, Outcome::Up, u, alpha),
        }
    }

    pub fn get(&self, outcome: Outcome) -> &Array2<C64> {
        match outcome {
            Outcome::Down => &self.m_down,
            Outcome::Up => &self.m_up,
        }
    }

    /// `|| M_d^H M_d + M_u^H M_u - 1 ||_max`.
    pub fn povm_residual(&self) -> f64 {
        let sum = dagger(&self.m_down).dot(&self.m_down) + dagger(&self.m_up).dot(&self.m_up);
        let eye = Array2::<C64>::eye(2);
        (&sum - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Closed-form Kraus operator for measuring the ancilla in `outcome`, with
/// the ancilla prepared down. `u` and `alpha` in units of pi.
pub fn kraus(kind: MeasureKind, outcome: Outcome, u: f64, alpha: f64) -> Array2<C64> {
    let ur = u * std::f64::consts::PI;
    let ar = alpha * std::f64::consts::PI;
    let r = |x: f64| C64::new(x, 0.0);
    match (kind, outcome) {
        (MeasureKind::X, Outcome::Down) => {
            let c = ur.cos() * ar.cos();
            let s = ur.sin() * ar.sin();
            array![[r(c), r(s)], [r(s), r(c)]]
        }
        (MeasureKind::X, Outcome::Up) => {
            let c = ur.cos() * ar.sin();
            let s = -ur.sin() * ar.cos();
            array![[r(c), r(s)], [r(s), r(c)]]
        }
        (MeasureKind::Z, Outcome::Down) => {
            array![
                [r((ur + ar).cos()), r(0.0)],
                [r(0.0), r((ur - ar).cos())]
            ]
        }
        (MeasureKind::Z, Outcome::Up) => {
            array![
                [r((ur + ar).sin()), r(0.0)],
                [r(0.0), r(-(ur - ar).sin())]
            ]
        }
    }
}

/// POVM completeness residual for one `(kind, u, alpha)`.
pub fn verify_povm(kind: MeasureKind, u: f64, alpha: f64) -> f64 {
    KrausSet::new(kind, u, alpha).povm_residual()
}

/// Cross-check of the closed forms against the exponential of the coupling
/// generator `exp(-i (u S - alpha) (x) ancilla_sx)`, where `S` is the system
/// factor (`sx` for the X kind, `diag(-1, 1)` for the Z kind, matching the
/// basis ordering of the closed forms). Extracts the `<outcome| U |down>`
/// blocks via the spectral decomposition of `S` and returns the largest
/// deviation from [`kraus`], allowing one global phase per block.
pub fn verify_kraus_from_unitary(kind: MeasureKind, u: f64, alpha: f64) -> f64 {
    let ur = u * std::f64::consts::PI;
    let ar = alpha * std::f64::consts::PI;
    // Spectral data of the 2x2 system factor.
    let (eigvals, projs): ([f64; 2], [Array2<C64>; 2]) = match kind {
        MeasureKind::X => {
            let h = C64::new(0.5, 0.0);
            (
                [1.0, -1.0],
                [
                    array![[h, h], [h, h]],
                    array![[h, -h], [-h, h]],
                ],
            )
        }
        MeasureKind::Z => {
            let o = C64::new(0.0, 0.0);
            let l = C64::new(1.0, 0.0);
            (
                [-1.0, 1.0],
                [array![[l, o], [o, o]], array![[o, o], [o, l]]],
            )
        }
    };

    let mut worst = 0.0f64;
    for outcome in [Outcome::Down, Outcome::Up] {
        let mut block = Array2::<C64>::zeros((2, 2));
        for (lam, p) in eigvals.iter().zip(projs.iter()) {
            let theta = ur * lam - ar;
            // <down|exp(-i theta sx)|down> = cos(theta);
            // <up|exp(-i theta sx)|down> = -i sin(theta).
            let amp = match outcome {
                Outcome::Down => C64::new(theta.cos(), 0.0),
                Outcome::Up => C64::new(0.0, -theta.sin()),
            };
            block = block + p.mapv(|z| z * amp);
        }
        let closed = kraus(kind, outcome, u, alpha);
        worst = worst.max(phase_aligned_distance(&block, &closed));
    }
    worst
}

/// Largest entry-wise deviation after rotating each matrix by the global
/// phase that makes its largest-modulus entry real positive.
fn phase_aligned_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let align = |m: &Array2<C64>| -> Array2<C64> {
        let big = m
            .iter()
            .cloned()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap_or(C64::new(0.0, 0.0));
        if big.norm() < 1e-300 {
            m.clone()
        } else {
            let phase = big.conj() / big.norm();
            m.mapv(|z| z * phase)
        }
    };
    let (aa, bb) = (align(a), align(b));
    (&aa - &bb).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Trajectory probability per unit cell at `alpha = 0`: `cos^2(pi u)` per
/// down outcome and `sin^2(pi u)` per up outcome.
pub fn analytic_probability_alpha0(u: f64, pattern: &[Outcome; CELL]) -> f64 {
    let ur = u * std::f64::consts::PI;
    pattern
        .iter()
        .map(|o| match o {
            Outcome::Down => ur.cos().powi(2),
            Outcome::Up => ur.sin().powi(2),
        })
        .product()
}

/// A measured state: renormalized, re-canonicalized, with its per-cell Born
/// weight recorded before renormalization.
#[derive(Debug, Clone)]
pub struct PostMeasurementState {
    pub state: UniformMps,
    pub born_weight_per_cell: f64,
    pub spec: MeasurementSpec,
}

/// Kraus-dressed site tensors of the trajectory on the left-canonical gauge.
fn dressed_tensors(gs: &UniformMps, spec: &MeasurementSpec) -> [ndarray::Array3<C64>; CELL] {
    let set = KrausSet::new(spec.kind, spec.u, spec.alpha);
    [
        apply_phys(gs.a_l(0), set.get(spec.pattern[0])),
        apply_phys(gs.a_l(1), set.get(spec.pattern[1])),
    ]
}

/// Per-cell Born weight of the trajectory on a normalized state: the
/// dominant eigenvalue modulus of the Kraus-dressed unit-cell transfer map.
pub fn born_weight_per_cell(gs: &UniformMps, spec: &MeasurementSpec) -> Result<f64> {
    spec.validate()?;
    let dressed = dressed_tensors(gs, spec);
    let chi = gs.chi();
    let map = CellTransfer::new(vec![&dressed[0], &dressed[1]]);
    let eye = Array2::<C64>::eye(chi);
    let pairs = dominant_eigs(&map, 1, flatten(&eye).view(), 1e-11)?;
    let w = pairs[0].value.norm();
    if w < 1e-30 {
        return Err(Error::TrajectoryAnnihilated { weight: w });
    }
    Ok(w)
}

/// Applies one trajectory to a ground state: absorbs the on-site Kraus
/// operators (bond dimension unchanged), records the per-cell Born weight,
/// and re-canonicalizes/normalizes the result.
pub fn apply_trajectory(gs: &UniformMps, spec: &MeasurementSpec) -> Result<PostMeasurementState> {
    spec.validate()?;
    let weight = born_weight_per_cell(gs, spec)?;
    let dressed = dressed_tensors(gs, spec);
    let state = mixed_canonicalize(&dressed)?;
    Ok(PostMeasurementState {
        state,
        born_weight_per_cell: weight,
        spec: *spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn kraus_trivial_limits() {
        // (Z, down, 0, 0) -> identity.
        let m = kraus(MeasureKind::Z, Outcome::Down, 0.0, 0.0);
        assert!((m[(0, 0)].re - 1.0).abs() < 1e-15 && (m[(1, 1)].re - 1.0).abs() < 1e-15);

        // (Z, down, 1/4, 0) -> cos(pi/4) * identity.
        let m = kraus(MeasureKind::Z, Outcome::Down, 0.25, 0.0);
        let c = (PI / 4.0).cos();
        assert!((m[(0, 0)].re - c).abs() < 1e-15 && (m[(1, 1)].re - c).abs() < 1e-15);
        assert!(m[(0, 1)].norm() < 1e-15);

        // (X, up, u, 0) -> -sin(pi u) sx.
        let u = 0.3;
        let m = kraus(MeasureKind::X, Outcome::Up, u, 0.0);
        let s = (PI * u).sin();
        assert!((m[(0, 1)].re + s).abs() < 1e-15);
        assert!((m[(1, 0)].re + s).abs() < 1e-15);
        assert!(m[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn kraus_z_closed_form() {
        let (u, a) = (0.1, 0.004);
        let m = kraus(MeasureKind::Z, Outcome::Down, u, a);
        assert!((m[(0, 0)].re - (0.104 * PI).cos()).abs() < 1e-15);
        assert!((m[(1, 1)].re - (0.096 * PI).cos()).abs() < 1e-15);
    }

    #[test]
    fn povm_completeness() {
        assert!(verify_povm(MeasureKind::Z, 0.1, 0.004) < 1e-14);
        assert!(verify_povm(MeasureKind::X, 0.37, 0.2) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let kind = if rng.gen::<bool>() {
                MeasureKind::X
            } else {
                MeasureKind::Z
            };
            let u = rng.gen::<f64>();
            let a = rng.gen::<f64>();
            assert!(verify_povm(kind, u, a) < 1e-12);
        }
    }

    #[test]
    fn unitary_cross_check() {
        assert!(verify_kraus_from_unitary(MeasureKind::Z, 0.1, 0.004) < 1e-12);
        assert!(verify_kraus_from_unitary(MeasureKind::X, 0.3, 0.01) < 1e-12);
        // (Z, 0, 0): U = identity, blocks are {1, 0}.
        assert!(verify_kraus_from_unitary(MeasureKind::Z, 0.0, 0.0) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let kind = if rng.gen::<bool>() {
                MeasureKind::X
            } else {
                MeasureKind::Z
            };
            assert!(verify_kraus_from_unitary(kind, rng.gen(), rng.gen()) < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_kraus_proportional_to_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let u: f64 = rng.gen();
            for kind in [MeasureKind::X, MeasureKind::Z] {
                let set = KrausSet::new(kind, u, 0.0);
                for (m, c2) in [
                    (&set.m_down, (PI * u).cos().powi(2)),
                    (&set.m_up, (PI * u).sin().powi(2)),
                ] {
                    let prod = dagger(m).dot(m);
                    let eye = Array2::<C64>::eye(2).mapv(|z| z * c2);
                    let dev = (&prod - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    assert!(dev < 1e-12, "kind {kind:?} u {u}: {dev}");
                }
            }
        }
    }

    #[test]
    fn weak_strength_first_order_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let u: f64 = rng.gen();
            let alpha = rng.gen::<f64>() * 0.004;
            for kind in [MeasureKind::X, MeasureKind::Z] {
                for out in [Outcome::Down, Outcome::Up] {
                    let m = kraus(kind, out, u, alpha);
                    let m0 = kraus(kind, out, u, 0.0);
                    let dev = (&m - &m0).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    assert!(
                        dev <= PI * alpha + 1e-14,
                        "kind {kind:?} out {out:?}: {dev} vs {}",
                        PI * alpha
                    );
                }
            }
        }
    }

    #[test]
    fn analytic_probabilities() {
        let dd = [Outcome::Down, Outcome::Down];
        let ud = [Outcome::Up, Outcome::Down];
        let uu = [Outcome::Up, Outcome::Up];
        assert!((analytic_probability_alpha0(0.25, &dd) - 0.25).abs() < 1e-12);
        assert_eq!(analytic_probability_alpha0(0.0, &uu), 0.0);
        let expect = (0.1f64 * PI).sin().powi(2) * (0.1f64 * PI).cos().powi(2);
        assert!((analytic_probability_alpha0(0.1, &ud) - expect).abs() < 1e-12);
        // Completeness over the four patterns.
        let du = [Outcome::Down, Outcome::Up];
        let total: f64 = [dd, ud, du, uu]
            .iter()
            .map(|p| analytic_probability_alpha0(0.37, p))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn annihilated_trajectory_fails() {
        let gs = crate::umps::random_umps(4, 8).unwrap();
        // u = 0 with an up outcome gives the zero operator.
        let spec =
            MeasurementSpec::new(MeasureKind::Z, 0.0, 0.0, [Outcome::Up, Outcome::Down]).unwrap();
        match born_weight_per_cell(&gs, &spec) {
            Err(Error::TrajectoryAnnihilated { .. }) => {}
            other => panic!("expected annihilation, got {other:?}"),
        }
    }

    #[test]
    fn born_weight_alpha0_table_on_random_state() {
        // alpha = 0 operators are proportional to unitaries, so the weight
        // table holds on any normalized state.
        let gs = crate::umps::random_umps(6, 3).unwrap();
        let u = 0.1;
        let cases = [
            ([Outcome::Down, Outcome::Down], (PI * u).cos().powi(4)),
            (
                [Outcome::Up, Outcome::Down],
                (PI * u).sin().powi(2) * (PI * u).cos().powi(2),
            ),
            ([Outcome::Up, Outcome::Up], (PI * u).sin().powi(4)),
        ];
        for (pattern, expect) in cases {
            for kind in [MeasureKind::X, MeasureKind::Z] {
                let spec = MeasurementSpec::new(kind, u, 0.0, pattern).unwrap();
                let w = born_weight_per_cell(&gs, &spec).unwrap();
                assert!(
                    (w - expect).abs() < 1e-10,
                    "kind {kind:?} pattern {pattern:?}: {w} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn born_weight_translation_invariant() {
        let gs = crate::umps::random_umps(5, 12).unwrap();
        let spec =
            MeasurementSpec::new(MeasureKind::Z, 0.13, 0.002, [Outcome::Up, Outcome::Down])
                .unwrap();
        let dressed = super::dressed_tensors(&gs, &spec);
        let eye = Array2::<C64>::eye(gs.chi());
        let w01 = dominant_eigs(
            &CellTransfer::new(vec![&dressed[0], &dressed[1]]),
            1,
            flatten(&eye).view(),
            1e-11,
        )
        .unwrap()[0]
            .value
            .norm();
        let w10 = dominant_eigs(
            &CellTransfer::new(vec![&dressed[1], &dressed[0]]),
            1,
            flatten(&eye).view(),
            1e-11,
        )
        .unwrap()[0]
            .value
            .norm();
        assert!((w01 - w10).abs() < 1e-10);
    }
}
