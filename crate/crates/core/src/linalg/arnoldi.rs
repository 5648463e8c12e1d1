use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray_linalg::Eig;

use super::{inner, norm2, LinearMap};
use crate::error::{Error, Result};
use crate::C64;

/// One eigenvalue/eigenvector pair; the vector is normalized.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: C64,
    pub vector: Array1<C64>,
}

/// Largest-modulus eigenpairs of a square matrix-free operator.
///
/// Implicitly restarted Arnoldi with thick restart: the Krylov basis is
/// rebuilt around the wanted Ritz vectors at every restart, with subspace
/// size `max(2k+10, 30)` and at most `10 * dim / m` restarts. Every returned
/// pair satisfies `||A v - lambda v|| < tol` with `||v|| = 1`, pairs sorted
/// by non-increasing modulus.
///
/// Small operators (`dim <= m`) are materialized and solved densely.
pub fn dominant_eigs(
    map: &dyn LinearMap,
    k: usize,
    v0: ArrayView1<C64>,
    tol: f64,
) -> Result<Vec<EigPair>> {
    if !map.is_square() {
        return Err(Error::invalid("dominant_eigs requires a square map"));
    }
    let dim = map.dim_in();
    if k == 0 || k > dim {
        return Err(Error::invalid(format!("k = {k} out of range for dim {dim}")));
    }
    if v0.len() != dim {
        return Err(Error::shape(format!("start vector of dim {dim}"), format!("{}", v0.len())));
    }

    let m = (2 * k + 10).max(30).min(dim);
    if dim <= m {
        return dense_fallback(map, k, tol);
    }

    let max_restarts = (10 * dim / m).max(20);

    // Basis columns V[.., 0..=j]; proj = V^H A V restricted to the leading
    // block, bordered with the restart spike rows.
    let mut basis = Array2::<C64>::zeros((dim, m + 1));
    let mut proj = Array2::<C64>::zeros((m + 1, m));

    let nrm = norm2(v0);
    if nrm == 0.0 {
        return Err(Error::invalid("zero start vector"));
    }
    basis.column_mut(0).assign(&v0.mapv(|z| z / nrm));
    let mut j = 0usize; // columns already in the basis beyond which to expand

    let mut op_scale = 0.0f64;
    for _restart in 0..max_restarts {
        // Expand Arnoldi factorization up to m columns.
        let mut breakdown = false;
        while j < m {
            let w = map.apply(basis.column(j));
            op_scale = op_scale.max(norm2(w.view()));
            let mut w = w;
            // Orthogonalize twice against the current basis.
            for _ in 0..2 {
                for i in 0..=j {
                    let c = inner(basis.column(i), w.view());
                    proj[(i, j)] += c;
                    let col = basis.column(i);
                    w.zip_mut_with(&col, |x, &b| *x -= c * b);
                }
            }
            let beta = norm2(w.view());
            if beta < 1e-13 * op_scale.max(1e-300) {
                // Invariant subspace found. Extend the basis with a fresh
                // deterministic direction (the factorization stays exact:
                // the subdiagonal coupling is zero) so the remaining wanted
                // pairs can still be reached.
                match fresh_direction(&basis, j, dim) {
                    Some(v) => {
                        basis.column_mut(j + 1).assign(&v);
                        j += 1;
                        continue;
                    }
                    None => {
                        breakdown = true;
                        j += 1;
                        break;
                    }
                }
            }
            proj[(j + 1, j)] = C64::new(beta, 0.0);
            basis.column_mut(j + 1).assign(&w.mapv(|z| z / beta));
            j += 1;

            // Cheap residual bounds on the wanted Ritz pairs, checked every
            // few steps so well-started solves exit before filling m.
            if j > k + 1 && j % 4 == 0 && ritz_bound(&proj, j, k) * beta < 0.3 * tol {
                break;
            }
        }

        let hm = Array2::from_shape_fn((j, j), |(r, c)| proj[(r, c)]);
        let (vals, vecs) = hm.eig()?;
        let mut order: Vec<usize> = (0..j).collect();
        order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));

        // Candidate Ritz pairs, explicitly verified.
        let mut pairs = Vec::with_capacity(k);
        let mut worst = 0.0f64;
        let mut converged = 0usize;
        for &idx in order.iter().take(k) {
            let y = vecs.column(idx);
            let mut x = Array1::<C64>::zeros(dim);
            for i in 0..j {
                let yi = y[i];
                x.zip_mut_with(&basis.column(i), |acc, &b| *acc += yi * b);
            }
            let nx = norm2(x.view());
            if nx == 0.0 {
                worst = f64::INFINITY;
                break;
            }
            let x = x.mapv(|z| z / nx);
            let ax = map.apply(x.view());
            let lambda = vals[idx];
            let mut r = ax;
            r.zip_mut_with(&x, |a, &b| *a -= lambda * b);
            let res = norm2(r.view());
            worst = worst.max(res);
            if res < tol {
                converged += 1;
            }
            pairs.push(EigPair { value: lambda, vector: x });
        }

        if pairs.len() == k && worst < tol {
            return Ok(pairs);
        }
        if breakdown {
            // Invariant subspace smaller than requested and not converged.
            return Err(Error::EigsNoConvergence {
                requested: k,
                converged,
                residual: worst,
            });
        }

        // Thick restart: keep p wanted Ritz vectors (avoid splitting a
        // modulus-degenerate cluster at the boundary).
        let mut p = (k + 5).min(j.saturating_sub(2)).max(k.min(j));
        while p < j - 1 {
            let a = vals[order[p - 1]].norm();
            let b = vals[order[p]].norm();
            if a > 0.0 && (a - b).abs() / a < 1e-8 {
                p += 1;
            } else {
                break;
            }
        }

        // Orthonormal basis Qy for the span of the kept eigenvectors.
        let mut ymat = Array2::<C64>::zeros((j, p));
        for (c, &idx) in order.iter().take(p).enumerate() {
            ymat.column_mut(c).assign(&vecs.column(idx));
        }
        let (qy, _r) = match super::qr_positive(&ymat) {
            Ok(qr) => qr,
            Err(_) => {
                // Defective cluster: fall back to a fresh start from the
                // best Ritz vector.
                let x = pairs
                    .first()
                    .map(|pr| pr.vector.clone())
                    .unwrap_or_else(|| basis.column(0).to_owned());
                basis.column_mut(0).assign(&x);
                proj.fill(C64::new(0.0, 0.0));
                j = 0;
                continue;
            }
        };

        // V_new = V Qy, spike row from the residual direction v_j.
        let vj = basis.column(j).to_owned();
        let beta = proj[(j, j - 1)];
        let vold = basis.slice(s![.., ..j]).to_owned();
        let vnew = vold.dot(&qy);
        let hnew = {
            let hq = hm.dot(&qy);
            let mut hn = Array2::<C64>::zeros((p, p));
            for c in 0..p {
                for r in 0..p {
                    hn[(r, c)] = inner(qy.column(r), hq.column(c).view());
                }
            }
            hn
        };
        proj.fill(C64::new(0.0, 0.0));
        proj.slice_mut(s![..p, ..p]).assign(&hnew);
        // A V_new = V_new H_new + beta v_j (e_{j-1}^T Qy): spike row.
        for c in 0..p {
            proj[(p, c)] = beta * qy[(j - 1, c)];
        }
        basis.slice_mut(s![.., ..p]).assign(&vnew);
        basis.column_mut(p).assign(&vj);
        j = p;
    }

    Err(Error::EigsNoConvergence {
        requested: k,
        converged: 0,
        residual: f64::NAN,
    })
}

/// Worst `|y_last|` over the `k` largest-modulus Ritz vectors of the leading
/// `j x j` block.
fn ritz_bound(proj: &Array2<C64>, j: usize, k: usize) -> f64 {
    let hm = Array2::from_shape_fn((j, j), |(r, c)| proj[(r, c)]);
    match hm.eig() {
        Ok((vals, vecs)) => {
            let mut order: Vec<usize> = (0..j).collect();
            order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
            order
                .iter()
                .take(k)
                .map(|&i| vecs[(j - 1, i)].norm())
                .fold(0.0, f64::max)
        }
        Err(_) => 1.0,
    }
}

/// A deterministic unit vector orthogonal to basis columns `0..=j`, if the
/// orthogonal complement is non-trivial.
fn fresh_direction(basis: &Array2<C64>, j: usize, dim: usize) -> Option<Array1<C64>> {
    if j + 1 >= dim {
        return None;
    }
    for attempt in 0..4u64 {
        let mut v = Array1::from_shape_fn(dim, |i| {
            // splitmix64-style hash of (i, attempt): cheap and reproducible
            let mut x = (i as u64)
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(attempt.wrapping_mul(0xbf58_476d_1ce4_e5b9))
                .wrapping_add(0x94d0_49bb_1331_11eb);
            x ^= x >> 30;
            x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
            x ^= x >> 27;
            let re = (x & 0xffff_ffff) as f64 / u32::MAX as f64 - 0.5;
            let im = (x >> 32) as f64 / u32::MAX as f64 - 0.5;
            C64::new(re, im)
        });
        for _ in 0..2 {
            for i in 0..=j {
                let c = inner(basis.column(i), v.view());
                let col = basis.column(i);
                v.zip_mut_with(&col, |x, &b| *x -= c * b);
            }
        }
        let n = norm2(v.view());
        if n > 1e-8 {
            return Some(v.mapv(|z| z / n));
        }
    }
    None
}

fn dense_fallback(map: &dyn LinearMap, k: usize, tol: f64) -> Result<Vec<EigPair>> {
    let dim = map.dim_in();
    let mut mat = Array2::<C64>::zeros((dim, dim));
    let mut e = Array1::<C64>::zeros(dim);
    for c in 0..dim {
        e[c] = C64::new(1.0, 0.0);
        let col = map.apply(e.view());
        mat.column_mut(c).assign(&col);
        e[c] = C64::new(0.0, 0.0);
    }
    let (vals, vecs) = mat.eig()?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
    let mut out = Vec::with_capacity(k);
    let mut worst = 0.0f64;
    for &idx in order.iter().take(k) {
        let x = vecs.column(idx).to_owned();
        let nx = norm2(x.view());
        let x = x.mapv(|z| z / nx);
        let mut r = map.apply(x.view());
        r.zip_mut_with(&x, |a, &b| *a -= vals[idx] * b);
        worst = worst.max(norm2(r.view()));
        out.push(EigPair {
            value: vals[idx],
            vector: x,
        });
    }
    if worst < tol.max(1e-11) {
        Ok(out)
    } else {
        Err(Error::EigsNoConvergence {
            requested: k,
            converged: 0,
            residual: worst,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MatMap;
    use ndarray::Array2;
    use ndarray_linalg::Eig;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_start(dim: usize) -> Array1<C64> {
        Array1::from_elem(dim, C64::new(1.0, 0.0) / (dim as f64).sqrt())
    }

    #[test]
    fn scaled_identity() {
        let map = MatMap(Array2::<C64>::eye(10).mapv(|z| z * 2.0));
        let pairs = dominant_eigs(&map, 1, unit_start(10).view(), 1e-10).unwrap();
        assert!((pairs[0].value - C64::new(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn diagonal_two_leading() {
        let n = 40;
        let mut d = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            d[(i, i)] = C64::new(1.0 / (1.0 + i as f64) * if i == 0 { 1.0 } else { 0.9 }, 0.0);
        }
        d[(1, 1)] = C64::new(0.9, 0.0);
        let map = MatMap(d);
        let mut v0 = unit_start(n);
        // Perturb so the start vector overlaps every eigenvector.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        v0.mapv_inplace(|z| z * C64::new(1.0 + 0.1 * rng.gen::<f64>(), 0.0));
        let pairs = dominant_eigs(&map, 2, v0.view(), 1e-10).unwrap();
        assert!((pairs[0].value.re - 1.0).abs() < 1e-9);
        assert!((pairs[1].value.re - 0.9).abs() < 1e-9);
    }

    #[test]
    fn random_symmetric_matches_dense() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let x = C64::new(rng.gen::<f64>() - 0.5, 0.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        let (vals, _) = a.eig().unwrap();
        let mut mods: Vec<f64> = vals.iter().map(|z| z.norm()).collect();
        mods.sort_by(|x, y| y.total_cmp(x));

        let map = MatMap(a.clone());
        let v0 = Array1::from_shape_fn(n, |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let pairs = dominant_eigs(&map, 3, v0.view(), 1e-10).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            assert!(
                (p.value.norm() - mods[i]).abs() < 1e-8,
                "pair {i}: {} vs dense {}",
                p.value.norm(),
                mods[i]
            );
            let mut r = map.apply(p.vector.view());
            r.zip_mut_with(&p.vector, |x, &v| *x -= p.value * v);
            assert!(norm2(r.view()) < 1e-10);
        }
        // Modulus-descending.
        for w in pairs.windows(2) {
            assert!(w[0].value.norm() >= w[1].value.norm() - 1e-12);
        }
    }

    #[test]
    fn non_hermitian_dominant() {
        // Companion-like matrix with known spectrum: eigenvalues of the
        // cyclic shift scaled by 0.95 plus a rank-one boost.
        let n = 64;
        let mut a = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            a[(i, (i + 1) % n)] = C64::new(0.5, 0.0);
        }
        for i in 0..n {
            a[(i, i)] += C64::new(0.1 * (i as f64) / n as f64, 0.0);
        }
        let map = MatMap(a.clone());
        let v0 = unit_start(n);
        let pairs = dominant_eigs(&map, 4, v0.view(), 1e-10).unwrap();
        let (vals, _) = a.eig().unwrap();
        let mut mods: Vec<f64> = vals.iter().map(|z| z.norm()).collect();
        mods.sort_by(|x, y| y.total_cmp(x));
        for (i, p) in pairs.iter().enumerate() {
            assert!((p.value.norm() - mods[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn small_dim_dense_path() {
        let map = MatMap(Array2::<C64>::eye(4).mapv(|z| z * 3.0));
        let pairs = dominant_eigs(&map, 4, unit_start(4).view(), 1e-10).unwrap();
        assert_eq!(pairs.len(), 4);
        for p in &pairs {
            assert!((p.value - C64::new(3.0, 0.0)).norm() < 1e-10);
        }
    }
}
