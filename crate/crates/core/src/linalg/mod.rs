//! Dense complex tensor/matrix primitives and matrix-free iterative spectral
//! routines.
//!
//! Conventions used across the crate:
//! - scalars are [`C64`] (complex double precision) everywhere;
//! - dense data is row-major (`ndarray` default);
//! - `dagger` is the conjugate transpose.

mod arnoldi;
mod decomp;
mod gmres;
mod lanczos;
mod tensor;

pub use arnoldi::{dominant_eigs, EigPair};
pub use decomp::{dagger, polar_left, polar_right, qr_positive, svd};
pub use gmres::gmres;
pub use lanczos::lowest_eigpair;
pub use tensor::DenseTensor;

use ndarray::{Array1, ArrayView1};

use crate::C64;

/// A linear operator given by its action on a vector, without materializing
/// the matrix.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, v: ArrayView1<C64>) -> Array1<C64>;

    fn is_square(&self) -> bool {
        self.dim_in() == self.dim_out()
    }
}

/// A dense matrix viewed as a [`LinearMap`]; mostly useful in tests and as
/// the small-dimension fallback of the iterative solvers.
pub struct MatMap(pub ndarray::Array2<C64>);

impl LinearMap for MatMap {
    fn dim_in(&self) -> usize {
        self.0.ncols()
    }

    fn dim_out(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: ArrayView1<C64>) -> Array1<C64> {
        self.0.dot(&v)
    }
}

/// A linear map defined by a closure over vectors.
pub struct FnMap<F>
where
    F: Fn(ArrayView1<C64>) -> Array1<C64>,
{
    pub dim: usize,
    pub f: F,
}

impl<F> LinearMap for FnMap<F>
where
    F: Fn(ArrayView1<C64>) -> Array1<C64>,
{
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn dim_out(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: ArrayView1<C64>) -> Array1<C64> {
        (self.f)(v)
    }
}

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

/// Pins the BLAS backend to one thread. The tensors here are small enough
/// that threaded GEMM only adds contention; call once at process start.
/// Parallelism belongs at the sweep level.
pub fn single_threaded_blas() {
    unsafe { openblas_set_num_threads(1) };
}

pub(crate) fn norm2(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}
