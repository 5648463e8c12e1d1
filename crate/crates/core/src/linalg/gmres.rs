use ndarray::{Array1, Array2, ArrayView1};

use super::{inner, norm2, LinearMap};
use crate::error::{Error, Result};
use crate::C64;

/// Restarted GMRES for `map(x) = b`.
///
/// Plain Arnoldi/Givens implementation with modified Gram-Schmidt; converges
/// when the residual drops below `tol * ||b||`. Returns the solution and the
/// final relative residual.
pub fn gmres(
    map: &dyn LinearMap,
    b: ArrayView1<C64>,
    x0: Option<ArrayView1<C64>>,
    tol: f64,
    restart: usize,
    max_restarts: usize,
) -> Result<(Array1<C64>, f64)> {
    let dim = map.dim_in();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((Array1::zeros(dim), 0.0));
    }
    let m = restart.min(dim).max(1);
    let mut x = match x0 {
        Some(v) => v.to_owned(),
        None => Array1::zeros(dim),
    };

    let mut last_rel = f64::INFINITY;
    for _outer in 0..max_restarts {
        let mut r = b.to_owned();
        let ax = map.apply(x.view());
        r.zip_mut_with(&ax, |a, &v| *a -= v);
        let beta = norm2(r.view());
        last_rel = beta / bnorm;
        if last_rel < tol {
            return Ok((x, last_rel));
        }

        let mut basis: Vec<Array1<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.mapv(|z| z / beta));
        let mut h = Array2::<C64>::zeros((m + 1, m));
        // Givens rotation pairs and the rotated rhs.
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = Array1::<C64>::zeros(m + 1);
        g[0] = C64::new(beta, 0.0);

        let mut k_used = 0;
        for k in 0..m {
            let mut w = map.apply(basis[k].view());
            for (i, q) in basis.iter().enumerate() {
                let c = inner(q.view(), w.view());
                h[(i, k)] = c;
                w.zip_mut_with(q, |x, &b| *x -= c * b);
            }
            let hk1 = norm2(w.view());
            h[(k + 1, k)] = C64::new(hk1, 0.0);

            // Apply previous rotations to the new column.
            for i in 0..k {
                let t = cs[i].conj() * h[(i, k)] + sn[i].conj() * h[(i + 1, k)];
                let u = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
                h[(i + 1, k)] = u;
            }
            // New rotation annihilating h[k+1, k].
            let (a, bb) = (h[(k, k)], h[(k + 1, k)]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if denom > 0.0 {
                cs[k] = a / denom;
                sn[k] = bb / denom;
                h[(k, k)] = cs[k].conj() * a + sn[k].conj() * bb;
                h[(k + 1, k)] = C64::new(0.0, 0.0);
                let gk = g[k];
                g[k] = cs[k].conj() * gk;
                g[k + 1] = -sn[k] * gk;
            }
            k_used = k + 1;

            let rel = g[k + 1].norm() / bnorm;
            if rel < tol || hk1 < 1e-300 {
                break;
            }
            basis.push(w.mapv(|z| z / hk1));
        }

        // Back substitution on the k_used x k_used triangular system.
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k_used {
                acc -= h[(i, j)] * y[j];
            }
            y[i] = acc / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            let q = &basis[i];
            x.zip_mut_with(q, |a, &b| *a += *yi * b);
        }
    }

    // Final residual check.
    let mut r = b.to_owned();
    let ax = map.apply(x.view());
    r.zip_mut_with(&ax, |a, &v| *a -= v);
    let rel = norm2(r.view()) / bnorm;
    if rel < tol {
        Ok((x, rel))
    } else {
        Err(Error::SolveNoConvergence {
            residual: rel.min(last_rel),
            iterations: max_restarts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MatMap;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_well_conditioned_system() {
        let n = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = Array2::<C64>::eye(n).mapv(|z| z * 3.0);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 0.1;
            }
        }
        let xtrue = Array1::from_shape_fn(n, |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let b = a.dot(&xtrue);
        let map = MatMap(a);
        let (x, rel) = gmres(&map, b.view(), None, 1e-12, 40, 50).unwrap();
        assert!(rel < 1e-12);
        let err: f64 = x
            .iter()
            .zip(xtrue.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9, "solution error {err}");
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let map = MatMap(Array2::<C64>::eye(4));
        let b = Array1::<C64>::zeros(4);
        let (x, rel) = gmres(&map, b.view(), None, 1e-12, 4, 4).unwrap();
        assert_eq!(rel, 0.0);
        assert!(x.iter().all(|z| z.norm() == 0.0));
    }
}
