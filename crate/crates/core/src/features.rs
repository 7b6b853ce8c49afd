//! Multi-scale random Fourier feature encoding.
//!
//! Each map `k` owns a frozen Gaussian frequency matrix `B_k` (`rows_per_map × input_dim`,
//! entries `N(0, σ_k²)`). A coordinate `v` encodes to
//! `[sin(2πB₁v), cos(2πB₁v), …, sin(2πB_Nv), cos(2πB_Nv)]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::rng::SplitMix64;

/// Default scale ladder.
pub const DEFAULT_SCALES: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierConfig {
    /// Standard deviation σ_k of each map's frequency entries. Its length is the map count.
    pub scales: Vec<f64>,
    pub rows_per_map: usize,
    pub input_dim: usize,
    pub seed: u64,
}

impl FourierConfig {
    pub fn new(scales: Vec<f64>, rows_per_map: usize, input_dim: usize, seed: u64) -> Self {
        Self {
            scales,
            rows_per_map,
            input_dim,
            seed,
        }
    }

    /// The default six-scale ladder with 16 rows per map.
    pub fn default_for(input_dim: usize, seed: u64) -> Self {
        Self::new(DEFAULT_SCALES.to_vec(), 16, input_dim, seed)
    }

    /// A configuration with no maps; networks built on it consume raw coordinates.
    pub fn disabled(input_dim: usize) -> Self {
        Self::new(Vec::new(), 1, input_dim, 0)
    }

    pub fn num_maps(&self) -> usize {
        self.scales.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.rows_per_map * self.num_maps()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!(
                "Fourier scale {s} must be positive and finite"
            )));
        }
        if self.rows_per_map == 0 {
            return Err(Error::invalid("rows_per_map must be at least 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be at least 1"));
        }
        Ok(())
    }
}

/// A sampled, frozen Fourier feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    config: FourierConfig,
    bases: Vec<DenseMatrix>,
}

/// Draws the frequency matrices for `config`. Fully determined by the config and its seed.
pub fn sample_fourier_map(config: &FourierConfig) -> Result<FourierMap> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let bases = config
        .scales
        .iter()
        .map(|&sigma| {
            let n = config.rows_per_map * config.input_dim;
            let data = (0..n).map(|_| sigma * rng.normal()).collect();
            DenseMatrix::from_raw(config.rows_per_map, config.input_dim, data)
        })
        .collect();
    Ok(FourierMap {
        config: config.clone(),
        bases,
    })
}

impl FourierMap {
    /// Rebuilds a map from stored bases (deserialization).
    pub fn from_parts(config: FourierConfig, bases: Vec<DenseMatrix>) -> Result<Self> {
        config.validate()?;
        if bases.len() != config.num_maps()
            || bases
                .iter()
                .any(|b| b.shape() != (config.rows_per_map, config.input_dim))
        {
            return Err(Error::dims(
                "Fourier bases do not match their configuration",
            ));
        }
        Ok(Self { config, bases })
    }

    pub fn config(&self) -> &FourierConfig {
        &self.config
    }

    pub fn bases(&self) -> &[DenseMatrix] {
        &self.bases
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Total number of frequency rows across all maps.
    pub fn total_rows(&self) -> usize {
        self.config.rows_per_map * self.config.num_maps()
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.config.input_dim {
            return Err(Error::dims(format!(
                "coordinate of length {} for a map over {} inputs",
                v.len(),
                self.config.input_dim
            )));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.encode_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn encode_into(&self, v: &[f64], out: &mut [f64]) {
        let r = self.config.rows_per_map;
        for (k, b) in self.bases.iter().enumerate() {
            let block = &mut out[2 * r * k..2 * r * (k + 1)];
            for i in 0..r {
                let phase = 2.0 * PI * dot(b.row(i), v);
                let (s, c) = phase.sin_cos();
                block[i] = s;
                block[r + i] = c;
            }
        }
    }

    /// `γ(u)·γ(v)`, the kernel induced by the encoding.
    pub fn composed_kernel(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        Ok(dot(&self.encode(u)?, &self.encode(v)?))
    }

    /// `Σ_b cos(2π b·(u − v))` over every frequency row `b`; equal to
    /// [`composed_kernel`](Self::composed_kernel) and visibly a function of `u − v` only.
    pub fn stationary_kernel(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != self.config.input_dim || v.len() != self.config.input_dim {
            return Err(Error::dims(
                "kernel arguments do not match the map input dimension",
            ));
        }
        let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        let diff = diff.as_slice();
        Ok(self
            .bases
            .iter()
            .flat_map(|b| (0..b.rows()).map(move |i| (2.0 * PI * dot(b.row(i), diff)).cos()))
            .sum())
    }
}

/// Free-function form of [`FourierMap::encode`].
pub fn encode(map: &FourierMap, v: &[f64]) -> Result<Vec<f64>> {
    map.encode(v)
}

/// Free-function form of [`FourierMap::composed_kernel`].
pub fn composed_kernel(map: &FourierMap, u: &[f64], v: &[f64]) -> Result<f64> {
    map.composed_kernel(u, v)
}
