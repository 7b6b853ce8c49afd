use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::model::mlp::{Linear, SineLayer};

/// A sine layer rewritten as a cosine/sine feature stack followed by a linear map.
///
/// `features` duplicates the rows of `W` with phases `[π/2, …, π/2, 0, …, 0]`, so it emits
/// `[cos(ω W x); sin(ω W x)]`. `mix = [diag(sin b), diag(cos b)]` then recombines the two
/// halves with the original phases via `sin(a + b) = sin b cos a + cos b sin a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedSine {
    pub features: SineLayer,
    pub mix: Linear,
}

impl ExpandedSine {
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.features.forward(x)?;
        let mut y = self.mix.weight.matvec(&z)?;
        for (v, b) in y.iter_mut().zip(&self.mix.bias) {
            *v += b;
        }
        Ok(y)
    }
}

pub fn expand_sine_layer(layer: &SineLayer) -> ExpandedSine {
    let (o, i) = layer.weight.shape();
    let mut w = Vec::with_capacity(2 * o * i);
    w.extend_from_slice(layer.weight.as_slice());
    w.extend_from_slice(layer.weight.as_slice());
    let mut phase = vec![FRAC_PI_2; o];
    phase.extend(std::iter::repeat(0.0).take(o));

    let mut mix = DenseMatrix::zeros(o, 2 * o);
    for (r, b) in layer.bias.iter().enumerate() {
        mix[(r, r)] = b.sin();
        mix[(r, o + r)] = b.cos();
    }
    ExpandedSine {
        features: SineLayer {
            weight: DenseMatrix::from_raw(2 * o, i, w),
            bias: phase,
            omega0: layer.omega0,
        },
        mix: Linear {
            weight: mix,
            bias: vec![0.0; o],
        },
    }
}
