//! Mixed-canonical uniform matrix product states with a two-site unit cell.
//!
//! Tensor layout: site tensors are `(chi, d, chi)` with the physical index in
//! the middle; `c[i]` is the center matrix on the bond between site `i` and
//! site `i + 1` (mod 2). The gauge conventions are
//!
//! - left:  `sum_s A_L(s)^H A_L(s) = 1`
//! - right: `sum_s A_R(s) A_R(s)^H = 1`
//! - consistency: `A_L[i] C[i] = C[i-1] A_R[i]` (= the center tensor `A_C[i]`)
//! - each `C[i]` has unit Frobenius norm, so its squared singular values are
//!   a probability distribution.

mod canonical;
mod io;

pub use canonical::mixed_canonicalize;
pub use io::{read_checkpoint, write_checkpoint, CheckpointMeta};

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dagger, LinearMap};
use crate::model::{CELL, PHYS_DIM};
use crate::C64;

/// Mixed-canonical uniform MPS over a two-site unit cell.
#[derive(Debug, Clone)]
pub struct UniformMps {
    a_l: [Array3<C64>; CELL],
    a_r: [Array3<C64>; CELL],
    c: [Array2<C64>; CELL],
    chi: usize,
}

/// Worst-case residuals of the gauge conditions, used by tests and sanity
/// checks.
#[derive(Debug, Clone, Copy)]
pub struct GaugeResiduals {
    pub left: f64,
    pub right: f64,
    pub consistency: f64,
    pub c_norm: f64,
}

impl GaugeResiduals {
    pub fn max(&self) -> f64 {
        self.left.max(self.right).max(self.consistency).max(self.c_norm)
    }
}

impl UniformMps {
    pub(crate) fn from_parts(
        a_l: [Array3<C64>; CELL],
        a_r: [Array3<C64>; CELL],
        c: [Array2<C64>; CELL],
    ) -> Result<Self> {
        let chi = a_l[0].dim().0;
        for t in a_l.iter().chain(a_r.iter()) {
            if t.dim() != (chi, PHYS_DIM, chi) {
                return Err(Error::shape(
                    format!("({chi}, {PHYS_DIM}, {chi})"),
                    format!("{:?}", t.dim()),
                ));
            }
        }
        for m in &c {
            if m.dim() != (chi, chi) {
                return Err(Error::shape(format!("({chi}, {chi})"), format!("{:?}", m.dim())));
            }
        }
        let s = Self { a_l, a_r, c, chi };
        s.ensure_finite()?;
        Ok(s)
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn cell(&self) -> usize {
        CELL
    }

    pub fn a_l(&self, site: usize) -> &Array3<C64> {
        &self.a_l[site % CELL]
    }

    pub fn a_r(&self, site: usize) -> &Array3<C64> {
        &self.a_r[site % CELL]
    }

    pub fn c(&self, bond: usize) -> &Array2<C64> {
        &self.c[bond % CELL]
    }

    /// Center tensor `A_C[i] = A_L[i] C[i]`.
    pub fn a_c(&self, site: usize) -> Array3<C64> {
        let site = site % CELL;
        absorb_right(&self.a_l[site], &self.c[site])
    }

    pub fn ensure_finite(&self) -> Result<()> {
        let ok = self
            .a_l
            .iter()
            .chain(self.a_r.iter())
            .flat_map(|t| t.iter())
            .chain(self.c.iter().flat_map(|m| m.iter()))
            .all(|z| z.re.is_finite() && z.im.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite { op: "uniform MPS" })
        }
    }

    pub fn gauge_residuals(&self) -> GaugeResiduals {
        let chi = self.chi;
        let eye = Array2::<C64>::eye(chi);
        let mut left = 0.0f64;
        let mut right = 0.0f64;
        for i in 0..CELL {
            let mut accl = Array2::<C64>::zeros((chi, chi));
            let mut accr = Array2::<C64>::zeros((chi, chi));
            for s in 0..PHYS_DIM {
                let ml = site_mat(&self.a_l[i], s);
                let mr = site_mat(&self.a_r[i], s);
                accl += &dagger(&ml).dot(&ml);
                accr += &mr.dot(&dagger(&mr));
            }
            left = left.max(frob(&(&accl - &eye)));
            right = right.max(frob(&(&accr - &eye)));
        }
        let mut consistency = 0.0f64;
        for i in 0..CELL {
            let lhs = absorb_right(&self.a_l[i], &self.c[i]);
            let rhs = absorb_left(&self.c[(i + CELL - 1) % CELL], &self.a_r[i]);
            consistency = consistency.max(frob3(&(&lhs - &rhs)));
        }
        let mut c_norm = 0.0f64;
        for m in &self.c {
            c_norm = c_norm.max((frob(m) - 1.0).abs());
        }
        GaugeResiduals {
            left,
            right,
            consistency,
            c_norm,
        }
    }

    /// Applies one on-site operator per unit-cell site to every site of the
    /// chain. For unitary operators this preserves all gauge conditions.
    pub fn apply_onsite(&self, ops: [&Array2<C64>; CELL]) -> Result<Self> {
        let a_l = [
            apply_phys(&self.a_l[0], ops[0]),
            apply_phys(&self.a_l[1], ops[1]),
        ];
        let a_r = [
            apply_phys(&self.a_r[0], ops[0]),
            apply_phys(&self.a_r[1], ops[1]),
        ];
        Self::from_parts(a_l, a_r, self.c.clone())
    }

    /// Expands the bond dimension to `chi_new` without changing the state.
    ///
    /// The existing tensors are embedded as the leading block; the new
    /// isometry directions are completed with seeded random orthonormal
    /// vectors (so the enlarged tensors stay injective), and the new Schmidt
    /// directions carry exactly zero weight.
    pub fn grow_bond_dimension(&self, chi_new: usize) -> Result<Self> {
        if chi_new < self.chi {
            return Err(Error::invalid(format!(
                "cannot shrink bond dimension {} -> {chi_new}",
                self.chi
            )));
        }
        if chi_new == self.chi {
            return Ok(self.clone());
        }
        let chi = self.chi;
        let mut rng = ChaCha8Rng::seed_from_u64(0x67726f77 ^ ((chi as u64) << 32) ^ chi_new as u64);

        let mut a_l: Vec<Array3<C64>> = Vec::with_capacity(CELL);
        let mut a_r: Vec<Array3<C64>> = Vec::with_capacity(CELL);
        for i in 0..CELL {
            // Left tensors: embed as (chi' d x chi') matrix with orthonormal
            // columns; complete the new columns randomly.
            let old = mat_l(&self.a_l[i]);
            let mut m = Array2::<C64>::zeros((chi_new * PHYS_DIM, chi_new));
            for x in 0..chi {
                for s in 0..PHYS_DIM {
                    for y in 0..chi {
                        m[(x * PHYS_DIM + s, y)] = old[(x * PHYS_DIM + s, y)];
                    }
                }
            }
            complete_columns(&mut m, chi, &mut rng)?;
            a_l.push(unmat_l(&m, chi_new));

            // Right tensors: same with orthonormal rows.
            let old = mat_r(&self.a_r[i]);
            let mut m = Array2::<C64>::zeros((chi_new, PHYS_DIM * chi_new));
            for x in 0..chi {
                for s in 0..PHYS_DIM {
                    for y in 0..chi {
                        m[(x, s * chi_new + y)] = old[(x, s * chi + y)];
                    }
                }
            }
            let mut mt = m.t().mapv(|z| z.conj());
            complete_columns(&mut mt, chi, &mut rng)?;
            a_r.push(unmat_r(&mt.t().mapv(|z| z.conj()), chi_new));
        }
        let mut c: Vec<Array2<C64>> = Vec::with_capacity(CELL);
        for i in 0..CELL {
            let mut m = Array2::<C64>::zeros((chi_new, chi_new));
            for x in 0..chi {
                for y in 0..chi {
                    m[(x, y)] = self.c[i][(x, y)];
                }
            }
            c.push(m);
        }
        Self::from_parts(
            [a_l.remove(0), a_l.remove(0)],
            [a_r.remove(0), a_r.remove(0)],
            [c.remove(0), c.remove(0)],
        )
    }
}

/// Deterministic random state in mixed canonical form.
pub fn random_umps(chi: usize, seed: u64) -> Result<UniformMps> {
    if chi == 0 {
        return Err(Error::invalid("bond dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<Array3<C64>> = Vec::with_capacity(CELL);
    for _ in 0..CELL {
        raw.push(Array3::from_shape_fn((chi, PHYS_DIM, chi), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        }));
    }
    mixed_canonicalize(&[raw[0].clone(), raw[1].clone()])
}

// ---------------------------------------------------------------------------
// small tensor helpers shared across the crate

pub(crate) fn frob(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn frob3(t: &Array3<C64>) -> f64 {
    t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `A(s)`: the `chi x chi` matrix at fixed physical index.
pub(crate) fn site_mat(a: &Array3<C64>, s: usize) -> Array2<C64> {
    a.index_axis(ndarray::Axis(1), s).to_owned()
}

/// Matricization grouping (left, phys) as rows: `(chi d, chi)`.
pub(crate) fn mat_l(a: &Array3<C64>) -> Array2<C64> {
    let (x, d, y) = a.dim();
    a.as_standard_layout()
        .to_owned()
        .into_shape_with_order((x * d, y))
        .expect("contiguous reshape")
}

pub(crate) fn unmat_l(m: &Array2<C64>, chi_r: usize) -> Array3<C64> {
    let rows = m.nrows();
    let d = PHYS_DIM;
    m.as_standard_layout()
        .to_owned()
        .into_shape_with_order((rows / d, d, chi_r))
        .expect("reshape")
}

/// Matricization grouping (phys, right) as columns: `(chi, d chi)`.
pub(crate) fn mat_r(a: &Array3<C64>) -> Array2<C64> {
    let (x, d, y) = a.dim();
    a.as_standard_layout()
        .to_owned()
        .into_shape_with_order((x, d * y))
        .expect("contiguous reshape")
}

pub(crate) fn unmat_r(m: &Array2<C64>, chi_l: usize) -> Array3<C64> {
    let cols = m.ncols();
    let d = PHYS_DIM;
    m.as_standard_layout()
        .to_owned()
        .into_shape_with_order((chi_l, d, cols / d))
        .expect("reshape")
}

/// Contract a matrix into the right virtual leg: `B[x,s,y] = sum_w A[x,s,w] M[w,y]`.
pub(crate) fn absorb_right(a: &Array3<C64>, m: &Array2<C64>) -> Array3<C64> {
    let (x, d, _) = a.dim();
    let prod = mat_l(a).dot(m);
    prod.as_standard_layout()
        .to_owned()
        .into_shape_with_order((x, d, m.ncols()))
        .expect("reshape")
}

/// Contract a matrix into the left virtual leg: `B[x,s,y] = sum_w M[x,w] A[w,s,y]`.
pub(crate) fn absorb_left(m: &Array2<C64>, a: &Array3<C64>) -> Array3<C64> {
    let (_, d, y) = a.dim();
    let prod = m.dot(&mat_r(a));
    prod.as_standard_layout()
        .to_owned()
        .into_shape_with_order((m.nrows(), d, y))
        .expect("reshape")
}

/// Apply an on-site operator to the physical leg: `B[x,s,y] = sum_t O[s,t] A[x,t,y]`.
pub(crate) fn apply_phys(a: &Array3<C64>, op: &Array2<C64>) -> Array3<C64> {
    let (x, d, y) = a.dim();
    let mut out = Array3::<C64>::zeros((x, d, y));
    for s in 0..d {
        for t in 0..d {
            let w = op[(s, t)];
            if w.norm() == 0.0 {
                continue;
            }
            let slice = a.index_axis(ndarray::Axis(1), t);
            let mut dst = out.index_axis_mut(ndarray::Axis(1), s);
            dst.zip_mut_with(&slice, |o, &v| *o += w * v);
        }
    }
    out
}

/// One environment step moving rightward: `X -> sum_s A(s)^H X A(s)`.
pub(crate) fn env_step_right(x: &Array2<C64>, a: &Array3<C64>) -> Array2<C64> {
    let chi_out = a.dim().2;
    let mut out = Array2::<C64>::zeros((chi_out, chi_out));
    for s in 0..a.dim().1 {
        let m = site_mat(a, s);
        out += &dagger(&m).dot(x).dot(&m);
    }
    out
}

/// One environment step moving leftward: `X -> sum_s A(s) X A(s)^H`.
pub(crate) fn env_step_left(x: &Array2<C64>, a: &Array3<C64>) -> Array2<C64> {
    let chi_out = a.dim().0;
    let mut out = Array2::<C64>::zeros((chi_out, chi_out));
    for s in 0..a.dim().1 {
        let m = site_mat(a, s);
        out += &m.dot(x).dot(&dagger(&m));
    }
    out
}

pub(crate) fn flatten(m: &Array2<C64>) -> Array1<C64> {
    Array1::from_iter(m.iter().cloned())
}

pub(crate) fn unflatten(v: ArrayView1<C64>, rows: usize, cols: usize) -> Array2<C64> {
    Array2::from_shape_vec((rows, cols), v.to_vec()).expect("length matches")
}

/// Transfer map of one unit cell, moving rightward across `sites` in order,
/// acting on flattened `chi x chi` matrices.
pub struct CellTransfer<'a> {
    sites: Vec<&'a Array3<C64>>,
    chi: usize,
}

impl<'a> CellTransfer<'a> {
    pub fn new(sites: Vec<&'a Array3<C64>>) -> Self {
        let chi = sites[0].dim().0;
        Self { sites, chi }
    }
}

impl LinearMap for CellTransfer<'_> {
    fn dim_in(&self) -> usize {
        self.chi * self.chi
    }

    fn dim_out(&self) -> usize {
        self.chi * self.chi
    }

    fn apply(&self, v: ArrayView1<C64>) -> Array1<C64> {
        let mut x = unflatten(v, self.chi, self.chi);
        for a in &self.sites {
            x = env_step_right(&x, a);
        }
        flatten(&x)
    }
}

/// Completes columns `rank..` of `m` (whose first `rank` columns are
/// orthonormal) to an orthonormal set, deterministically from `rng`.
fn complete_columns(m: &mut Array2<C64>, rank: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let cols = m.ncols();
    for j in rank..cols {
        let mut attempt = 0;
        loop {
            let mut v = Array1::from_shape_fn(m.nrows(), |_| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            for _ in 0..2 {
                for i in 0..j {
                    let q = m.column(i);
                    let c: C64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                    v.zip_mut_with(&q, |x, &b| *x -= c * b);
                }
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-8 {
                m.column_mut(j).assign(&v.mapv(|z| z / n));
                break;
            }
            attempt += 1;
            if attempt > 8 {
                return Err(Error::Solver("isometry completion failed".into()));
            }
        }
    }
    Ok(())
}
