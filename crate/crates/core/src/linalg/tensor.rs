use ndarray::{Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::C64;

/// Dense complex tensor of arbitrary rank, row-major.
///
/// Invariants: the product of `shape` equals the number of entries, and all
/// entries are finite. Constructors enforce both.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    data: ArrayD<C64>,
}

impl DenseTensor {
    pub fn from_vec(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                format!("{n} entries for shape {shape:?}"),
                format!("{} entries", data.len()),
            ));
        }
        let data = ArrayD::from_shape_vec(IxDyn(shape), data)
            .map_err(|e| Error::shape(format!("{shape:?}"), e.to_string()))?;
        let t = Self { data };
        t.ensure_finite("from_vec")?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn rank(&self) -> usize {
        self.data.ndim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn entries(&self) -> impl Iterator<Item = &C64> {
        self.data.iter()
    }

    pub fn view(&self) -> &ArrayD<C64> {
        &self.data
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn as_mat(&self) -> Result<Array2<C64>> {
        match self.shape() {
            [r, c] => Ok(self
                .data
                .view()
                .into_shape_with_order((*r, *c))
                .expect("rank-2 reshape")
                .to_owned()),
            s => Err(Error::shape("rank-2 tensor", format!("rank {}", s.len()))),
        }
    }

    pub fn as_rank3(&self) -> Result<Array3<C64>> {
        match self.shape() {
            [a, b, c] => Ok(self
                .data
                .view()
                .into_shape_with_order((*a, *b, *c))
                .expect("rank-3 reshape")
                .to_owned()),
            s => Err(Error::shape("rank-3 tensor", format!("rank {}", s.len()))),
        }
    }
}

impl From<Array2<C64>> for DenseTensor {
    fn from(m: Array2<C64>) -> Self {
        Self { data: m.into_dyn() }
    }
}

impl From<Array3<C64>> for DenseTensor {
    fn from(m: Array3<C64>) -> Self {
        Self { data: m.into_dyn() }
    }
}
