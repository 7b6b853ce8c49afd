use serde::{Deserialize, Serialize};

use crate::data::field::GridField;
use crate::error::{Error, Result};
use crate::linalg::DenseTensor;

/// How raw coordinates of one axis become network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisTransform {
    /// `(raw − center) / half_extent`, mapping the axis extent onto [−1, 1].
    Affine { center: f64, half_extent: f64 },
    /// Coordinates are node indices and pass through unchanged.
    Index,
}

impl AxisTransform {
    /// The transform mapping `0..n-1` onto [−1, 1].
    pub fn for_extent(n: usize) -> Result<Self> {
        Self::for_range(0.0, (n.max(1) - 1) as f64)
    }

    pub fn for_range(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::invalid(format!(
                "constant or invalid axis range [{lo}, {hi}]"
            )));
        }
        Ok(AxisTransform::Affine {
            center: 0.5 * (lo + hi),
            half_extent: 0.5 * (hi - lo),
        })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        match *self {
            AxisTransform::Affine {
                center,
                half_extent,
            } => (raw - center) / half_extent,
            AxisTransform::Index => raw,
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        match *self {
            AxisTransform::Affine {
                center,
                half_extent,
            } => x * half_extent + center,
            AxisTransform::Index => x,
        }
    }
}

/// Coordinate and value scaling shared by training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub axes: Vec<AxisTransform>,
    pub value_mean: Vec<f64>,
    pub value_std: Vec<f64>,
}

impl Normalizer {
    /// Fits grid-index transforms for every axis (node indices for `graph_axes`) and
    /// per-channel standardization over the observed cells.
    pub fn fit(field: &GridField, graph_axes: &[usize]) -> Result<Self> {
        let axes = field
            .dims()
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                if graph_axes.contains(&k) {
                    Ok(AxisTransform::Index)
                } else if n < 2 {
                    Err(Error::invalid(format!("axis {k} has a single coordinate")))
                } else {
                    AxisTransform::for_extent(n)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let c = field.channels();
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for cell in (0..field.cells()).filter(|&i| field.is_observed(i)) {
            for (s, v) in sum.iter_mut().zip(field.cell_values(cell)) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("field has no observed cells"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; c];
        for cell in (0..field.cells()).filter(|&i| field.is_observed(i)) {
            for ((s, v), m) in sq.iter_mut().zip(field.cell_values(cell)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = sq
            .iter()
            .enumerate()
            .map(|(ch, s)| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    log::warn!("channel {ch} has zero variance; using std 1");
                    1.0
                }
            })
            .collect();
        Ok(Self {
            axes,
            value_mean: mean,
            value_std: std,
        })
    }

    pub fn identity(arity: usize, channels: usize) -> Self {
        Self {
            axes: vec![AxisTransform::Index; arity],
            value_mean: vec![0.0; channels],
            value_std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.value_mean.len()
    }

    pub fn coord(&self, axis: usize, raw: f64) -> f64 {
        self.axes[axis].apply(raw)
    }

    pub fn raw_coord(&self, axis: usize, x: f64) -> f64 {
        self.axes[axis].invert(x)
    }

    pub fn value(&self, channel: usize, raw: f64) -> f64 {
        (raw - self.value_mean[channel]) / self.value_std[channel]
    }

    pub fn raw_value(&self, channel: usize, z: f64) -> f64 {
        z * self.value_std[channel] + self.value_mean[channel]
    }

    /// Standardizes every value of a field (mask preserved).
    pub fn normalize_field(&self, field: &GridField) -> Result<GridField> {
        self.map_values(field, |s, ch, v| s.value(ch, v))
    }

    pub fn denormalize_field(&self, field: &GridField) -> Result<GridField> {
        self.map_values(field, |s, ch, v| s.raw_value(ch, v))
    }

    fn map_values(
        &self,
        field: &GridField,
        f: impl Fn(&Self, usize, f64) -> f64,
    ) -> Result<GridField> {
        let c = field.channels();
        if c != self.channels() {
            return Err(Error::dims("channel count does not match the normalizer"));
        }
        let data = field
            .values()
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self, i % c, v))
            .collect();
        // Unobserved cells may hold NaN placeholders, so skip the finiteness check.
        let values = DenseTensor::from_raw(field.values().shape().to_vec(), data);
        GridField::new(values, c, field.mask().map(<[bool]>::to_vec))
    }
}

/// Fits a normalizer on `field` and returns the standardized field alongside it.
pub fn normalize(field: &GridField, graph_axes: &[usize]) -> Result<(GridField, Normalizer)> {
    let n = Normalizer::fit(field, graph_axes)?;
    Ok((n.normalize_field(field)?, n))
}

pub fn denormalize(field: &GridField, normalizer: &Normalizer) -> Result<GridField> {
    normalizer.denormalize_field(field)
}
