use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Dense N-way tensor, row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::dims(format!(
                "{} values for tensor of shape {shape:?}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::from_raw(shape, vec![0.0; len])
    }

    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self::from_raw(vec![m.rows(), m.cols()], m.as_slice().to_vec())
    }

    /// Interprets a 2-way tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        if self.shape.len() != 2 {
            return Err(Error::dims(format!(
                "tensor of order {} is not a matrix",
                self.order()
            )));
        }
        Ok(DenseMatrix::from_raw(
            self.shape[0],
            self.shape[1],
            self.data.clone(),
        ))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for (k, &n) in self.shape.iter().enumerate().rev() {
            idx[k] = offset % n;
            offset /= n;
        }
        idx
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Mode-n product `t ×_mode m`: contracts `t`'s `mode` index against the columns of `m`.
    pub fn mode_n_product(&self, m: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
        mode_n_product(self, m, mode)
    }
}

/// Mode-n product: `out[.., j, ..] = Σ_i m[j, i] · t[.., i, ..]`, with `mode` zero-based.
pub fn mode_n_product(t: &DenseTensor, m: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    if mode >= t.order() {
        return Err(Error::dims(format!(
            "mode {mode} out of range for tensor of order {}",
            t.order()
        )));
    }
    let size = t.shape[mode];
    if m.cols() != size {
        return Err(Error::dims(format!(
            "matrix with {} columns against mode {mode} of size {size}",
            m.cols()
        )));
    }
    let outer: usize = t.shape[..mode].iter().product();
    let inner: usize = t.shape[mode + 1..].iter().product();
    let rows = m.rows();
    let mut shape = t.shape.clone();
    shape[mode] = rows;
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let src = &t.data[o * size * inner..(o + 1) * size * inner];
        let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
        for j in 0..rows {
            let mrow = m.row(j);
            let drow = &mut dst[j * inner..(j + 1) * inner];
            for (i, &mji) in mrow.iter().enumerate() {
                if mji == 0.0 {
                    continue;
                }
                let srow = &src[i * inner..(i + 1) * inner];
                for (d, &s) in drow.iter_mut().zip(srow) {
                    *d += mji * s;
                }
            }
        }
    }
    Ok(DenseTensor::from_raw(shape, out))
}
