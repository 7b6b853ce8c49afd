use serde::{Deserialize, Serialize};

use crate::data::field::GridField;
use crate::data::normalize::Normalizer;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::SplitMix64;

/// Coordinate/value pairs drawn from a grid.
///
/// `coords` is `M × arity`, `values` is `M × channels`, and `cells[i]` records which grid
/// cell row `i` came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub coords: DenseMatrix,
    pub values: DenseMatrix,
    pub cells: Vec<usize>,
}

impl ObservationSet {
    pub fn new(coords: DenseMatrix, values: DenseMatrix, cells: Vec<usize>) -> Result<Self> {
        if coords.rows() != values.rows() || cells.len() != coords.rows() {
            return Err(Error::dims(
                "coordinates, values and cells differ in length",
            ));
        }
        Ok(Self {
            coords,
            values,
            cells,
        })
    }

    /// Collects the given cells of a field with raw grid-index coordinates.
    pub fn from_cells(field: &GridField, cells: Vec<usize>) -> Self {
        let c = field.arity();
        let ch = field.channels();
        let mut coords = Vec::with_capacity(cells.len() * c);
        let mut values = Vec::with_capacity(cells.len() * ch);
        for &cell in &cells {
            coords.extend(field.cell_index(cell).into_iter().map(|i| i as f64));
            values.extend_from_slice(field.cell_values(cell));
        }
        Self {
            coords: DenseMatrix::from_raw(cells.len(), c, coords),
            values: DenseMatrix::from_raw(cells.len(), ch, values),
            cells,
        }
    }

    /// Every observed cell of a field.
    pub fn observed(field: &GridField) -> Self {
        let cells = (0..field.cells())
            .filter(|&i| field.is_observed(i))
            .collect();
        Self::from_cells(field, cells)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        self.coords.cols()
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    /// Applies coordinate and value normalization.
    pub fn normalized(&self, n: &Normalizer) -> Result<Self> {
        if n.axes.len() != self.arity() || n.channels() != self.channels() {
            return Err(Error::dims("normalizer does not match the observations"));
        }
        let mut coords = self.coords.clone();
        for r in 0..coords.rows() {
            for (k, x) in coords.row_mut(r).iter_mut().enumerate() {
                *x = n.coord(k, *x);
            }
        }
        let mut values = self.values.clone();
        for r in 0..values.rows() {
            for (ch, y) in values.row_mut(r).iter_mut().enumerate() {
                *y = n.value(ch, *y);
            }
        }
        Ok(Self {
            coords,
            values,
            cells: self.cells.clone(),
        })
    }
}

/// How `sample_mask` chooses the training cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// `rate` is the fraction of observed cells kept for training.
    Pointwise,
    /// `rate` is the fraction of axis-0 slices (sensors) held out entirely.
    ColumnDrop,
    /// `rate` is the fraction of axis-1 slices (time steps) held out entirely.
    RowDrop,
}

/// Splits the observed cells of `field` into training and held-out sets.
///
/// Counts are `round(rate · n)` over observed cells (pointwise) or over slices of the
/// dropped axis. Both sets list cells in increasing order.
pub fn sample_mask(
    field: &GridField,
    mode: MaskMode,
    rate: f64,
    seed: u64,
) -> Result<(ObservationSet, ObservationSet)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!(
            "mask rate {rate} must lie in (0, 1)"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let observed: Vec<usize> = (0..field.cells())
        .filter(|&i| field.is_observed(i))
        .collect();
    let mut is_train = vec![false; field.cells()];
    match mode {
        MaskMode::Pointwise => {
            let keep = (rate * observed.len() as f64).round() as usize;
            let perm = rng.permutation(observed.len());
            for &p in &perm[..keep] {
                is_train[observed[p]] = true;
            }
        }
        MaskMode::ColumnDrop | MaskMode::RowDrop => {
            let axis = usize::from(mode == MaskMode::RowDrop);
            if axis >= field.arity() {
                return Err(Error::invalid("row drop needs at least two axes"));
            }
            let n = field.dims()[axis];
            let hide = (rate * n as f64).round() as usize;
            let mut hidden = vec![false; n];
            for &s in &rng.permutation(n)[..hide] {
                hidden[s] = true;
            }
            for &cell in &observed {
                is_train[cell] = !hidden[field.cell_index(cell)[axis]];
            }
        }
    }
    let (train, heldout): (Vec<usize>, Vec<usize>) =
        observed.into_iter().partition(|&c| is_train[c]);
    if train.is_empty() {
        return Err(Error::invalid("mask leaves no training points"));
    }
    Ok((
        ObservationSet::from_cells(field, train),
        ObservationSet::from_cells(field, heldout),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseTensor;
    use proptest::prelude::*;

    fn grid(n: usize, t: usize) -> GridField {
        let data = (0..n * t).map(|i| i as f64).collect();
        GridField::from_tensor(DenseTensor::new(vec![n, t], data).unwrap()).unwrap()
    }

    #[test]
    fn pointwise_count() {
        for seed in 0..5 {
            let (train, held) = sample_mask(&grid(10, 10), MaskMode::Pointwise, 0.2, seed).unwrap();
            assert_eq!(train.len(), 20);
            assert_eq!(held.len(), 80);
        }
    }

    #[test]
    fn column_drop_hides_whole_slices() {
        let f = grid(325, 4);
        let (train, held) = sample_mask(&f, MaskMode::ColumnDrop, 0.6, 1).unwrap();
        let hidden: std::collections::BTreeSet<usize> =
            held.cells.iter().map(|&c| f.cell_index(c)[0]).collect();
        assert_eq!(hidden.len(), 195);
        assert_eq!(held.len(), 195 * 4);
        assert!(train
            .cells
            .iter()
            .all(|&c| !hidden.contains(&f.cell_index(c)[0])));
    }

    #[test]
    fn row_drop_hides_time_slices() {
        let f = grid(4, 10);
        let (_, held) = sample_mask(&f, MaskMode::RowDrop, 0.3, 2).unwrap();
        assert_eq!(held.len(), 3 * 4);
    }

    #[test]
    fn rate_bounds() {
        let f = grid(3, 3);
        assert!(sample_mask(&f, MaskMode::Pointwise, 1.0, 0).is_err());
        assert!(sample_mask(&f, MaskMode::Pointwise, 0.0, 0).is_err());
        assert!(sample_mask(&f, MaskMode::Pointwise, 0.01, 0).is_err());
    }

    #[test]
    fn values_follow_cells_and_normalize() {
        let f = grid(4, 5);
        let (train, _) = sample_mask(&f, MaskMode::Pointwise, 0.5, 3).unwrap();
        for r in 0..train.len() {
            let (i, j) = (train.coords[(r, 0)] as usize, train.coords[(r, 1)] as usize);
            assert_eq!(train.values[(r, 0)], (i * 5 + j) as f64);
        }
        let n = Normalizer::fit(&f, &[]).unwrap();
        let z = train.normalized(&n).unwrap();
        assert!(z.coords.as_slice().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn partition_of_observed_cells(seed in any::<u64>(), rate in 0.1f64..0.9, mode in 0usize..3) {
            let mask: Vec<bool> = (0..48).map(|i| (i * 7 + seed as usize) % 5 != 0).collect();
            let f = grid(6, 8).with_mask(Some(mask.clone())).unwrap();
            let mode = [MaskMode::Pointwise, MaskMode::ColumnDrop, MaskMode::RowDrop][mode];
            if let Ok((train, held)) = sample_mask(&f, mode, rate, seed) {
                let mut all: Vec<usize> = train.cells.iter().chain(&held.cells).copied().collect();
                all.sort_unstable();
                let observed: Vec<usize> = (0..48).filter(|&c| mask[c]).collect();
                prop_assert_eq!(all, observed);
                let again = sample_mask(&f, mode, rate, seed).unwrap();
                prop_assert_eq!(again.0, train);
            }
        }
    }
}
