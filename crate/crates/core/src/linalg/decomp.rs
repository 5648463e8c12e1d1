use ndarray::{Array1, Array2};
use ndarray_linalg::SVD as LapackSvd;
use ndarray_linalg::QR as LapackQr;

use crate::error::{Error, Result};
use crate::C64;

/// Conjugate transpose (always standard layout).
pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    let (r, c) = m.dim();
    Array2::from_shape_fn((c, r), |(i, j)| m[(j, i)].conj())
}

fn ensure_finite_mat(m: &Array2<C64>, op: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Thin singular value decomposition `m = U diag(s) Vh`.
///
/// `U` has orthonormal columns, `Vh` orthonormal rows, and `s` is sorted in
/// non-increasing order. Fails explicitly if the underlying factorization
/// does not converge or produces non-finite entries.
pub fn svd(m: &Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    ensure_finite_mat(m, "svd input")?;
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    let (u, sing, vh) = m.svd(true, true)?;
    let u = u.expect("requested U");
    let vh = vh.expect("requested Vh");
    // Rebuild the thin factors with standard strides: slicing to a
    // singleton axis yields zero strides, which later LAPACK calls reject.
    let u = Array2::from_shape_fn((rows, k), |(i, j)| u[(i, j)]);
    let vh = Array2::from_shape_fn((k, cols), |(i, j)| vh[(i, j)]);
    if !sing.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { op: "svd" });
    }
    Ok((u, sing, vh))
}

/// QR decomposition with the unique positive-diagonal convention:
/// `m = Q R` where `Q` has orthonormal columns and `R` is upper-triangular
/// with strictly positive real diagonal.
///
/// Requires at least as many rows as columns; fails loudly on rank-deficient
/// input rather than returning a degenerate factor.
pub fn qr_positive(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    ensure_finite_mat(m, "qr input")?;
    let (rows, cols) = m.dim();
    if rows < cols {
        return Err(Error::shape(
            format!("rows >= cols, got {rows}x{cols}"),
            "wide matrix".to_string(),
        ));
    }
    let (mut q, mut r) = m.qr()?;
    // Scale each column of Q / row of R so the diagonal of R is real positive.
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1.0);
    for i in 0..cols {
        let rii = r[(i, i)];
        let mag = rii.norm();
        if mag <= 1e-14 * scale {
            return Err(Error::RankDeficient {
                index: i,
                value: mag,
            });
        }
        let phase = rii / mag;
        let inv = phase.conj();
        for v in r.row_mut(i).iter_mut() {
            *v *= inv;
        }
        for v in q.column_mut(i).iter_mut() {
            *v *= phase;
        }
        r[(i, i)] = C64::new(mag, 0.0);
    }
    Ok((q, r))
}

/// Isometric factor of the left polar decomposition `m = V P` with `P`
/// positive semi-definite; `V` has orthonormal columns when `m` is tall.
pub fn polar_left(m: &Array2<C64>) -> Result<Array2<C64>> {
    let (u, _s, vh) = svd(m)?;
    Ok(u.dot(&vh))
}

/// Isometric factor of the right polar decomposition `m = P V`; `V` has
/// orthonormal rows when `m` is wide. Identical singular-vector product as
/// [`polar_left`], provided for call-site clarity.
pub fn polar_right(m: &Array2<C64>) -> Result<Array2<C64>> {
    polar_left(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Array2<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    fn frob(m: &Array2<C64>) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn svd_identity() {
        let m = Array2::<C64>::eye(4);
        let (_u, s, _vh) = svd(&m).unwrap();
        for x in s.iter() {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_diag_with_zero() {
        let mut m = Array2::<C64>::zeros((2, 2));
        m[(0, 0)] = C64::new(3.0, 0.0);
        let (u, s, vh) = svd(&m).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14);
        assert!(s[1].abs() < 1e-14);
        // U, Vh are permutation-signed identities up to column phases.
        for m in [&u, &vh] {
            for row in m.rows() {
                let big: usize = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                    .unwrap()
                    .0;
                assert!((row[big].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn svd_reconstruction_random() {
        let m = random_mat(8, 5, 1);
        let (u, s, vh) = svd(&m).unwrap();
        let k = s.len();
        let mut us = u.clone();
        for j in 0..k {
            for v in us.column_mut(j).iter_mut() {
                *v *= s[j];
            }
        }
        let rec = us.dot(&vh);
        let err = frob(&(&rec - &m)) / frob(&m);
        assert!(err < 1e-10, "reconstruction error {err}");
        // Descending order.
        for w in s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn svd_frobenius_identity() {
        for seed in 0..5 {
            let m = random_mat(7, 9, seed);
            let (_u, s, _vh) = svd(&m).unwrap();
            let sum_sq: f64 = s.iter().map(|x| x * x).sum();
            let frob_sq: f64 = m.iter().map(|z| z.norm_sqr()).sum();
            assert!((sum_sq - frob_sq).abs() / frob_sq < 1e-10);
        }
    }

    #[test]
    fn qr_identity_and_scaled() {
        let m = Array2::<C64>::eye(3);
        let (q, r) = qr_positive(&m).unwrap();
        assert!(frob(&(&q - &Array2::<C64>::eye(3))) < 1e-14);
        assert!(frob(&(&r - &Array2::<C64>::eye(3))) < 1e-14);

        let m2 = m.mapv(|z| z * 2.0);
        let (q2, r2) = qr_positive(&m2).unwrap();
        assert!(frob(&(&q2 - &Array2::<C64>::eye(3))) < 1e-14);
        assert!(frob(&(&r2 - &m2)) < 1e-14);
    }

    #[test]
    fn qr_orthonormality_random() {
        let m = random_mat(16, 8, 2);
        let (q, r) = qr_positive(&m).unwrap();
        let qtq = dagger(&q).dot(&q);
        assert!(frob(&(&qtq - &Array2::<C64>::eye(8))) < 1e-12);
        assert!(frob(&(&q.dot(&r) - &m)) / frob(&m) < 1e-10);
        for i in 0..8 {
            assert!(r[(i, i)].re > 0.0);
            assert!(r[(i, i)].im.abs() < 1e-14);
            for j in 0..i {
                assert!(r[(i, j)].norm() < 1e-14);
            }
        }
    }

    #[test]
    fn qr_unique_across_calls() {
        let m = random_mat(12, 6, 3);
        let (q1, _) = qr_positive(&m).unwrap();
        let (q2, _) = qr_positive(&m).unwrap();
        assert!(frob(&(&q1 - &q2)) < 1e-12);
    }

    #[test]
    fn qr_rank_deficient_fails() {
        let mut m = random_mat(6, 3, 4);
        let c0 = m.column(0).to_owned();
        m.column_mut(2).assign(&c0);
        // Make column 2 an exact copy of column 0: rank 2.
        assert!(matches!(
            qr_positive(&m),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn polar_factor_is_isometry() {
        let m = random_mat(10, 4, 5);
        let v = polar_left(&m).unwrap();
        let vtv = dagger(&v).dot(&v);
        assert!(frob(&(&vtv - &Array2::<C64>::eye(4))) < 1e-12);
        // P = V^H M must be positive semi-definite Hermitian.
        let p = dagger(&v).dot(&m);
        assert!(frob(&(&p - &dagger(&p))) < 1e-10);
    }
}
