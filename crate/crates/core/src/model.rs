//! Couplings, Pauli operators, and the matrix product operator for the
//! frustrated spin-1/2 chain
//!
//! ```text
//! H = sum_j ( -jx sx_j sx_{j+1} - jz sz_j sz_{j+1}
//!             + k (sx_j sx_{j+2} + sz_j sz_{j+2}) )
//! ```
//!
//! Basis convention used across the crate: physical index 0 is spin up
//! (`sz = +1`), index 1 is spin down. Many-body basis states are indexed
//! little-endian: site `j` lives at bit `j`.

use ndarray::{array, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// A single-site spin operator (2x2 complex matrix).
pub type SpinOp = Array2<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
    Id,
}

/// The Pauli matrix for `axis` in the (up, down) basis.
pub fn pauli(axis: Pauli) -> SpinOp {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        Pauli::X => array![[o, l], [l, o]],
        Pauli::Y => array![[o, -i], [i, o]],
        Pauli::Z => array![[l, o], [o, -l]],
        Pauli::Id => array![[l, o], [o, l]],
    }
}

/// Exchange couplings of the chain Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Nearest-neighbour xx coupling.
    pub jx: f64,
    /// Nearest-neighbour zz coupling.
    pub jz: f64,
    /// Isotropic (xx + zz) next-nearest-neighbour coupling.
    pub k: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            jx: 0.5,
            jz: 1.5,
            k: 0.0,
        }
    }
}

impl ModelParams {
    pub fn new(jx: f64, jz: f64, k: f64) -> Self {
        Self { jx, jz, k }
    }

    pub fn with_k(self, k: f64) -> Self {
        Self { k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.jx, self.jz, self.k].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("non-finite model parameters"))
        }
    }
}

/// Kronecker product; the first factor carries the major index.
fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<C64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij.norm() == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Matrix product operator for the Hamiltonian, identical on both unit-cell
/// sites.
///
/// Finite-state automaton over 6 virtual states:
/// 0 start, 1 emitted-sx, 2 emitted-sz, 3 carry-sx, 4 carry-sz, 5 done.
/// `W[a][b]` is the on-site operator for the `a -> b` transition; states 0
/// and 5 carry the identity on the diagonal and every other transition is
/// strictly increasing, so the automaton is upper triangular.
#[derive(Debug, Clone)]
pub struct Mpo {
    entries: Vec<(usize, usize, SpinOp)>,
    params: ModelParams,
}

/// Virtual bond dimension of the automaton.
pub const MPO_DIM: usize = 6;
/// Unit-cell length shared by all states and operators in this crate.
pub const CELL: usize = 2;
/// Physical dimension (spin 1/2).
pub const PHYS_DIM: usize = 2;

/// Index of the automaton start state (identity-before).
pub const MPO_START: usize = 0;
/// Index of the automaton done state (identity-after).
pub const MPO_DONE: usize = MPO_DIM - 1;

pub fn build_mpo(p: ModelParams) -> Result<Mpo> {
    p.validate()?;
    let sx = pauli(Pauli::X);
    let sz = pauli(Pauli::Z);
    let id = pauli(Pauli::Id);
    let mut entries = vec![
        (0, 0, id.clone()),
        (5, 5, id.clone()),
        (0, 1, sx.clone()),
        (0, 2, sz.clone()),
        (1, 3, id.clone()),
        (2, 4, id),
        (1, 5, sx.mapv(|z| z * -p.jx)),
        (2, 5, sz.mapv(|z| z * -p.jz)),
        (3, 5, sx.mapv(|z| z * p.k)),
        (4, 5, sz.mapv(|z| z * p.k)),
    ];
    // Zero-coefficient completions contribute nothing to any contraction.
    entries.retain(|(_, _, op)| op.iter().any(|z| z.norm() > 0.0));
    Ok(Mpo { entries, params: p })
}

impl Mpo {
    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// Sparse automaton entries `(left, right, operator)`.
    pub fn entries(&self) -> &[(usize, usize, SpinOp)] {
        &self.entries
    }

    /// The dense 4-index site tensor `W[a][b][s_out][s_in]`.
    pub fn tensor(&self) -> ndarray::Array4<C64> {
        let mut w = ndarray::Array4::zeros((MPO_DIM, MPO_DIM, PHYS_DIM, PHYS_DIM));
        for (a, b, op) in &self.entries {
            for s in 0..PHYS_DIM {
                for t in 0..PHYS_DIM {
                    w[(*a, *b, s, t)] = op[(s, t)];
                }
            }
        }
        w
    }

    /// Dense matrix of the open-chain Hamiltonian on `n` sites (boundary
    /// vectors on the start/done states): every interaction string fully
    /// contained in the window.
    pub fn dense_open(&self, n: usize) -> Array2<C64> {
        assert!(n >= 1 && n <= 12, "dense contraction limited to 12 sites");
        // ops[a] accumulates the operator on the sites consumed so far,
        // little-endian, so each new site enters as the major kron factor.
        let mut ops: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
        ops[MPO_START] = Some(Array2::eye(1));
        for _site in 0..n {
            let mut next: Vec<Option<Array2<C64>>> = vec![None; MPO_DIM];
            for (a, b, op) in &self.entries {
                if let Some(acc) = &ops[*a] {
                    let term = kron(op, acc);
                    match &mut next[*b] {
                        Some(t) => *t += &term,
                        None => next[*b] = Some(term),
                    }
                }
            }
            ops = next;
        }
        let dim = 1usize << n;
        ops[MPO_DONE]
            .take()
            .unwrap_or_else(|| Array2::zeros((dim, dim)))
    }

    /// Dense matrix of the periodic-ring Hamiltonian on `n` sites.
    ///
    /// Extracts the interaction strings starting at one site from the
    /// automaton (a three-site window minus its sub-window) and sums the
    /// `n` ring translations, wrapping site indices.
    pub fn dense_ring(&self, n: usize) -> Array2<C64> {
        assert!(n >= 4 && n <= 12, "ring contraction limited to 4..=12 sites");
        // Strings starting at window position 0, acting on 3 sites.
        let w3 = self.dense_open(3);
        let w2 = self.dense_open(2);
        let h_start = &w3 - &kron(&w2, &Array2::eye(PHYS_DIM));
        let dim = 1usize << n;
        let mut h = Array2::<C64>::zeros((dim, dim));
        for r in 0..n {
            let sites = [r, (r + 1) % n, (r + 2) % n];
            for b in 0..dim {
                let mut local_in = 0usize;
                for (w, site) in sites.iter().enumerate() {
                    local_in |= ((b >> site) & 1) << w;
                }
                for local_out in 0..8usize {
                    let v = h_start[(local_out, local_in)];
                    if v.norm() == 0.0 {
                        continue;
                    }
                    let mut bp = b;
                    for (w, site) in sites.iter().enumerate() {
                        bp = (bp & !(1 << site)) | (((local_out >> w) & 1) << site);
                    }
                    h[(bp, b)] += v;
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &Array2<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn pauli_matrices() {
        let sx = pauli(Pauli::X);
        let sz = pauli(Pauli::Z);
        assert_eq!(sx[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(sz[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(sz[(1, 1)], C64::new(-1.0, 0.0));
        let xx = sx.dot(&sx);
        assert!(max_abs(&(&xx - &pauli(Pauli::Id))) < 1e-15);
    }

    #[test]
    fn pauli_algebra() {
        let sx = pauli(Pauli::X);
        let sy = pauli(Pauli::Y);
        let sz = pauli(Pauli::Z);
        let i = C64::new(0.0, 1.0);
        // sx sy = i sz and cyclic.
        assert!(max_abs(&(&sx.dot(&sy) - &sz.mapv(|z| z * i))) < 1e-15);
        assert!(max_abs(&(&sy.dot(&sz) - &sx.mapv(|z| z * i))) < 1e-15);
        assert!(max_abs(&(&sz.dot(&sx) - &sy.mapv(|z| z * i))) < 1e-15);
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            let m = pauli(p);
            // Hermitian, traceless, squares to identity.
            assert!(max_abs(&(&m - &crate::linalg::dagger(&m))) < 1e-15);
            assert!((m[(0, 0)] + m[(1, 1)]).norm() < 1e-15);
            assert!(max_abs(&(&m.dot(&m) - &pauli(Pauli::Id))) < 1e-15);
        }
    }

    #[test]
    fn zero_params_contract_to_zero() {
        let mpo = build_mpo(ModelParams::new(0.0, 0.0, 0.0)).unwrap();
        let h = mpo.dense_open(4);
        assert!(max_abs(&h) < 1e-15);
    }

    #[test]
    fn contracted_hamiltonian_is_hermitian() {
        let mpo = build_mpo(ModelParams::new(0.5, 1.5, 0.54)).unwrap();
        for n in [4usize, 6] {
            let h = mpo.dense_ring(n);
            let diff = &h - &crate::linalg::dagger(&h);
            assert!(max_abs(&diff) < 1e-12);
        }
    }
}
