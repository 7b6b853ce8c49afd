use crate::error::{Error, Result};
use crate::linalg::DenseTensor;

/// Values on a regular grid with an optional observation mask.
///
/// `values` has shape `dims` (plus a trailing channel mode when `channels > 1`). The mask
/// has one entry per grid cell, row-major over `dims`; `true` means observed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: Vec<usize>,
    channels: usize,
    values: DenseTensor,
    mask: Option<Vec<bool>>,
}

impl GridField {
    pub fn new(values: DenseTensor, channels: usize, mask: Option<Vec<bool>>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("a field needs at least one channel"));
        }
        let shape = values.shape();
        let dims = if channels > 1 {
            if shape.last() != Some(&channels) || shape.len() < 2 {
                return Err(Error::dims("trailing mode must equal the channel count"));
            }
            shape[..shape.len() - 1].to_vec()
        } else {
            shape.to_vec()
        };
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid axes must be nonempty"));
        }
        let cells: usize = dims.iter().product();
        if let Some(m) = &mask {
            if m.len() != cells {
                return Err(Error::dims(format!(
                    "mask has {} entries for {cells} cells",
                    m.len()
                )));
            }
        }
        let field = Self {
            dims,
            channels,
            values,
            mask,
        };
        for cell in 0..cells {
            if field.is_observed(cell) && field.cell_values(cell).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observed cell {cell}")));
            }
        }
        Ok(field)
    }

    /// A fully observed single-channel field.
    pub fn from_tensor(values: DenseTensor) -> Result<Self> {
        Self::new(values, 1, None)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn values(&self) -> &DenseTensor {
        &self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn with_mask(self, mask: Option<Vec<bool>>) -> Result<Self> {
        Self::new(self.values, self.channels, mask)
    }

    pub fn is_observed(&self, cell: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[cell])
    }

    pub fn observed_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.cells(), |m| m.iter().filter(|&&b| b).count())
    }

    /// Values of one cell (one per channel).
    pub fn cell_values(&self, cell: usize) -> &[f64] {
        &self.values.as_slice()[cell * self.channels..(cell + 1) * self.channels]
    }

    /// Grid index of a cell.
    pub fn cell_index(&self, mut cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            idx[k] = cell % d;
            cell /= d;
        }
        idx
    }

    pub fn cell_offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// The 2-D single-channel value matrix, row-major.
    pub fn as_matrix(&self) -> Result<crate::linalg::DenseMatrix> {
        if self.dims.len() != 2 || self.channels != 1 {
            return Err(Error::dims("field is not a single-channel matrix"));
        }
        self.values.to_matrix()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let t = DenseTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert!(GridField::new(t.clone(), 1, Some(vec![true; 5])).is_err());
        assert!(GridField::new(t.clone(), 2, None).is_err());
        assert!(GridField::new(t.clone(), 3, None).is_ok());
        let nan = DenseTensor::from_raw(vec![2], vec![1.0, f64::NAN]);
        assert!(GridField::new(nan.clone(), 1, None).is_err());
        assert!(GridField::new(nan, 1, Some(vec![true, false])).is_ok());
    }

    #[test]
    fn cell_indexing() {
        let f = GridField::from_tensor(DenseTensor::zeros(vec![2, 3, 4])).unwrap();
        for cell in 0..24 {
            assert_eq!(f.cell_offset(&f.cell_index(cell)), cell);
        }
        assert_eq!(f.cell_index(23), vec![1, 2, 3]);
    }
}
