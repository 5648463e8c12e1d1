use ndarray::{Array2, Array3};
use ndarray_linalg::{Eigh, UPLO};

use super::{
    absorb_left, absorb_right, env_step_left, flatten, frob, mat_l, mat_r, unflatten, unmat_l,
    unmat_r, CellTransfer, UniformMps,
};
use crate::error::{Error, Result};
use crate::linalg::{dagger, dominant_eigs, qr_positive, FnMap};
use crate::model::{CELL, PHYS_DIM};
use crate::C64;

/// Relative tolerance below which the two leading transfer eigenvalues are
/// treated as degenerate (a symmetry-broken mixture, not a pure state).
const DEGENERACY_TOL: f64 = 1e-12;

/// Brings a raw two-site unit cell into mixed canonical form.
///
/// The cell transfer operator is normalized to dominant eigenvalue 1, the
/// left/right gauge transforms are obtained from its fixed points and
/// polished with QR sweeps, and the center matrices are normalized to unit
/// Frobenius norm.
pub fn mixed_canonicalize(raw: &[Array3<C64>; CELL]) -> Result<UniformMps> {
    let (chi, d, chi2) = raw[0].dim();
    if d != PHYS_DIM || chi != chi2 || raw[1].dim() != (chi, d, chi) {
        return Err(Error::shape(
            format!("two ({chi}, {PHYS_DIM}, {chi}) tensors"),
            format!("{:?} and {:?}", raw[0].dim(), raw[1].dim()),
        ));
    }
    for t in raw {
        if !t.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite { op: "mixed_canonicalize" });
        }
    }

    // Dominant eigenvalue of the cell transfer fixes the norm per cell.
    // First pass at loose tolerance on the raw map (whose scale is
    // arbitrary), then a tight pass after normalization.
    let eye = Array2::<C64>::eye(chi);
    let coarse = {
        let t_raw = CellTransfer::new(vec![&raw[0], &raw[1]]);
        dominant_eigs(&t_raw, 1, flatten(&eye).view(), 1e-6 * raw_scale(raw).max(1.0))?
    };
    let lambda = coarse[0].value.norm();
    if lambda < 1e-300 {
        return Err(Error::TrajectoryAnnihilated { weight: lambda });
    }
    let mut a: [Array3<C64>; CELL] = [
        raw[0].mapv(|z| z / lambda.powf(0.25)),
        raw[1].mapv(|z| z / lambda.powf(0.25)),
    ];
    let pairs = {
        let t_right = CellTransfer::new(vec![&a[0], &a[1]]);
        let pairs = dominant_eigs(&t_right, 1, coarse[0].vector.view(), 2e-12)?;
        if chi > 1 {
            let probe = dominant_eigs(&t_right, 2, flatten(&eye).view(), 1e-7)?;
            let ratio = probe[1].value.norm() / probe[0].value.norm();
            if ratio > 1.0 - DEGENERACY_TOL {
                return Err(Error::DegenerateTransfer { ratio });
            }
        }
        pairs
    };
    let refine = pairs[0].value.norm();
    if (refine - 1.0).abs() > 1e-9 {
        let s = refine.powf(0.25);
        a = [a[0].mapv(|z| z / s), a[1].mapv(|z| z / s)];
    }

    // Left fixed point and gauge sweep.
    let rho_l = hermitian_fixed_point(pairs[0].vector.view(), chi)?;
    let l_seed = factor_fixed_point(&rho_l, false)?;
    let (a_l, l_b0, l_b1) = left_sweep(&a, l_seed)?;

    // Right fixed point and gauge sweep.
    let t_left = FnMap {
        dim: chi * chi,
        f: |v: ndarray::ArrayView1<C64>| {
            let mut x = unflatten(v, chi, chi);
            x = env_step_left(&x, &a[1]);
            x = env_step_left(&x, &a[0]);
            flatten(&x)
        },
    };
    let pairs_r = dominant_eigs(&t_left, 1, flatten(&eye).view(), 2e-12)?;
    let rho_r = hermitian_fixed_point(pairs_r[0].vector.view(), chi)?;
    let r_seed = factor_fixed_point(&rho_r, true)?;
    let (a_r, r_b0, r_b1) = right_sweep(&a, r_seed)?;

    // Center matrices from the two gauge chains.
    let mut c1 = l_b1.dot(&r_b1);
    let mut c0 = l_b0.dot(&r_b0);
    let n0 = frob(&c0);
    let n1 = frob(&c1);
    if n0 < 1e-300 || n1 < 1e-300 {
        return Err(Error::Solver("vanishing center matrix".into()));
    }
    if (n0 / n1 - 1.0).abs() > 1e-6 {
        return Err(Error::Solver(format!(
            "inconsistent center norms {n0:.3e} vs {n1:.3e}"
        )));
    }
    c0.mapv_inplace(|z| z / n0);
    c1.mapv_inplace(|z| z / n1);

    let state = UniformMps::from_parts(a_l, a_r, [c0, c1])?;
    let g = state.gauge_residuals();
    if g.max() > 1e-9 {
        return Err(Error::Solver(format!(
            "canonicalization did not reach gauge tolerance: {g:?}"
        )));
    }
    Ok(state)
}

/// Frobenius-norm proxy for the raw cell transfer scale.
fn raw_scale(raw: &[Array3<C64>; CELL]) -> f64 {
    let f = |t: &Array3<C64>| t.iter().map(|z| z.norm_sqr()).sum::<f64>();
    f(&raw[0]) * f(&raw[1])
}

/// Reshape an eigenvector into a matrix, fix its global phase so the trace is
/// real positive, and Hermitize.
fn hermitian_fixed_point(v: ndarray::ArrayView1<C64>, chi: usize) -> Result<Array2<C64>> {
    let m = unflatten(v, chi, chi);
    let tr: C64 = (0..chi).map(|i| m[(i, i)]).sum();
    if tr.norm() < 1e-14 {
        return Err(Error::Solver("transfer fixed point has zero trace".into()));
    }
    let phase = tr.conj() / tr.norm();
    let m = m.mapv(|z| z * phase);
    let h = (&m + &dagger(&m)).mapv(|z| z * 0.5);
    Ok(h.mapv(|z| z / h.diag().iter().map(|x| x.re).sum::<f64>()))
}

/// Factor a positive fixed point as `l^H l` (left = false) or `r r^H`
/// (right = true), failing loudly if it is not numerically positive.
fn factor_fixed_point(rho: &Array2<C64>, right: bool) -> Result<Array2<C64>> {
    let (vals, vecs) = rho.eigh(UPLO::Lower)?;
    let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vmax <= 0.0 {
        return Err(Error::Solver("transfer fixed point not positive".into()));
    }
    let floor = -1e-10 * vmax;
    let mut sq = Array2::<C64>::zeros(rho.dim());
    for (i, &v) in vals.iter().enumerate() {
        if v < floor {
            return Err(Error::Solver(format!(
                "transfer fixed point has negative weight {v:.3e}"
            )));
        }
        sq[(i, i)] = C64::new(v.max(0.0).sqrt(), 0.0);
    }
    // rho = U diag(v) U^H; l = sqrt(diag) U^H so that l^H l = rho,
    // r = U sqrt(diag) so that r r^H = rho.
    let f = if right {
        vecs.dot(&sq)
    } else {
        sq.dot(&dagger(&vecs))
    };
    let n = frob(&f);
    Ok(f.mapv(|z| z / n))
}

/// QR gauge sweep for the left-canonical tensors. Returns the tensors and
/// the bond gauge matrices at bond 0 and bond 1 (the cell boundary).
fn left_sweep(
    a: &[Array3<C64>; CELL],
    seed: Array2<C64>,
) -> Result<([Array3<C64>; CELL], Array2<C64>, Array2<C64>)> {
    let chi = a[0].dim().0;
    let mut l = seed;
    let mut out = None;
    for _ in 0..200 {
        let (q0, r0) = qr_positive(&mat_l(&absorb_left(&l, &a[0])))?;
        let (q1, r1) = qr_positive(&mat_l(&absorb_left(&r0, &a[1])))?;
        let n1 = frob(&r1);
        let l_next = r1.mapv(|z| z / n1);
        let delta = frob(&(&l_next - &l));
        let a_l = [unmat_l(&q0, chi), unmat_l(&q1, chi)];
        out = Some((a_l, r0, r1));
        l = l_next;
        if delta < 1e-13 {
            break;
        }
    }
    let (a_l, r0, r1) = out.expect("at least one sweep");
    Ok((a_l, r0, r1))
}

/// LQ gauge sweep for the right-canonical tensors. Returns the tensors and
/// the bond gauge matrices at bond 0 and bond 1.
fn right_sweep(
    a: &[Array3<C64>; CELL],
    seed: Array2<C64>,
) -> Result<([Array3<C64>; CELL], Array2<C64>, Array2<C64>)> {
    let chi = a[0].dim().0;
    let mut r = seed;
    let mut out = None;
    for _ in 0..200 {
        let (l1, q1) = lq_positive(&mat_r(&absorb_right(&a[1], &r)))?;
        let (l0, q0) = lq_positive(&mat_r(&absorb_right(&a[0], &l1)))?;
        let n0 = frob(&l0);
        let r_next = l0.mapv(|z| z / n0);
        let delta = frob(&(&r_next - &r));
        let a_r = [unmat_r(&q0, chi), unmat_r(&q1, chi)];
        out = Some((a_r, l1, l0));
        r = r_next;
        if delta < 1e-13 {
            break;
        }
    }
    let (a_r, l1, l0) = out.expect("at least one sweep");
    Ok((a_r, l1, l0))
}

/// `m = L Q` with orthonormal rows in `Q` and lower-triangular positive
/// diagonal `L`, via positive QR of the conjugate transpose.
fn lq_positive(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (q, r) = qr_positive(&dagger(m))?;
    Ok((dagger(&r), dagger(&q)))
}

/// Gauge-fixed idempotence helper used by tests: Schmidt spectra of the two
/// center matrices.
#[cfg(test)]
pub(crate) fn schmidt_spectra(state: &UniformMps) -> Result<[Vec<f64>; CELL]> {
    let mut out: [Vec<f64>; CELL] = [vec![], vec![]];
    for i in 0..CELL {
        let (_, s, _) = crate::linalg::svd(state.c(i))?;
        out[i] = s.to_vec();
    }
    Ok(out)
}

/// Sanity check used in tests: norm of `T(x) - lambda x` for the cell
/// transfer built from the left tensors.
#[cfg(test)]
pub(crate) fn left_transfer_residual(state: &UniformMps) -> f64 {
    use crate::linalg::LinearMap;
    let chi = state.chi();
    let eye = Array2::<C64>::eye(chi);
    let t = CellTransfer::new(vec![state.a_l(0), state.a_l(1)]);
    let out = t.apply(flatten(&eye).view());
    let diff = &unflatten(out.view(), chi, chi) - &eye;
    frob(&diff)
}
