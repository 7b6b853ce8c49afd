//! Deterministic synthetic fields for desk-scale experiments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::field::GridField;
use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, GraphSpec};
use crate::linalg::{sym_eig, DenseMatrix, DenseTensor, DEFAULT_EIG_TOL};
use crate::rng::SplitMix64;

/// A congestion band moving upstream through free-flowing traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveParams {
    /// Background speed.
    pub free_flow: f64,
    /// Speed inside the band.
    pub congested: f64,
    /// Band width in cells along axis 0; 0 disables the band.
    pub band_width: f64,
    /// Cells per time step the band travels toward smaller axis-0 indices.
    pub wave_speed: f64,
    /// Band center at time 0, as a fraction of the axis-0 extent.
    pub start: f64,
    /// Length in cells of the linear ramp at each band edge.
    pub edge: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self {
            free_flow: 60.0,
            congested: 15.0,
            band_width: 12.0,
            wave_speed: 0.4,
            start: 0.8,
            edge: 1.0,
        }
    }
}

/// Speed field of shape `nx × nt` with a band whose center at time `t` is
/// `start·nx − wave_speed·t` (wrapping around axis 0), plus Gaussian noise.
pub fn synth_wave_field(
    nx: usize,
    nt: usize,
    p: &WaveParams,
    noise_std: f64,
    seed: u64,
) -> Result<GridField> {
    if nx < 8 || nt < 8 {
        return Err(Error::invalid("wave field needs at least 8 cells per axis"));
    }
    let finite = [
        p.free_flow,
        p.congested,
        p.band_width,
        p.wave_speed,
        p.start,
        p.edge,
        noise_std,
    ];
    if finite.iter().any(|x| !x.is_finite())
        || p.band_width < 0.0
        || p.edge <= 0.0
        || noise_std < 0.0
        || p.band_width >= nx as f64
    {
        return Err(Error::invalid("invalid wave parameters"));
    }
    let mut rng = SplitMix64::new(seed);
    let n = nx as f64;
    let mut data = Vec::with_capacity(nx * nt);
    for x in 0..nx {
        for t in 0..nt {
            let center = p.start * n - p.wave_speed * t as f64;
            let mut d = (x as f64 - center).rem_euclid(n);
            if d > 0.5 * n {
                d = n - d;
            }
            let depth = if p.band_width > 0.0 {
                ((0.5 * p.band_width - d) / p.edge + 0.5).clamp(0.0, 1.0)
            } else {
                0.0
            };
            data.push(p.free_flow - (p.free_flow - p.congested) * depth);
        }
    }
    if noise_std > 0.0 {
        for v in &mut data {
            *v += noise_std * rng.normal();
        }
    }
    GridField::from_tensor(DenseTensor::new(vec![nx, nt], data)?)
}

/// Smooth random factors: `F` cosine modes with coefficients decaying as `1/(1+f)²`.
fn smooth_factors(len: usize, rank: usize, rng: &mut SplitMix64) -> DenseMatrix {
    let modes = len.min((2 * rank).max(6));
    let mut out = DenseMatrix::zeros(len, rank);
    for j in 0..rank {
        let coeffs: Vec<f64> = (0..modes)
            .map(|f| rng.normal() / ((1 + f) as f64).powi(2))
            .collect();
        for i in 0..len {
            out[(i, j)] = coeffs
                .iter()
                .enumerate()
                .map(|(f, c)| c * (PI * f as f64 * (i as f64 + 0.5) / len as f64).cos())
                .sum();
        }
    }
    out
}

/// An exactly rank-`r` `n × t` matrix, the product of two smooth random factor matrices.
pub fn synth_low_rank(n: usize, t: usize, r: usize, seed: u64) -> Result<GridField> {
    if r == 0 || r > n.min(t) {
        return Err(Error::invalid(format!("rank {r} outside 1..={}", n.min(t))));
    }
    let mut rng = SplitMix64::new(seed);
    let u = smooth_factors(n, r, &mut rng);
    let v = smooth_factors(t, r, &mut rng);
    let x = u.matmul(&v.transpose())?;
    GridField::from_tensor(DenseTensor::from_matrix(&x))
}

/// A graph signal over `nt` steps whose every slice lies in the span of the first
/// `bandwidth` eigenvectors of the normalized Laplacian.
///
/// Coefficients evolve as `a_j + b_j sin(2π f_j t / nt + φ_j)` (times √n). The leading
/// coefficient carries a positive baseline so the signal stays away from zero.
pub fn synth_graph_signal(
    g: &GraphSpec,
    nt: usize,
    bandwidth: usize,
    seed: u64,
) -> Result<GridField> {
    let n = g.node_count();
    if bandwidth == 0 || bandwidth > n {
        return Err(Error::invalid(format!(
            "bandwidth {bandwidth} outside 1..={n}"
        )));
    }
    if nt == 0 {
        return Err(Error::invalid("need at least one time step"));
    }
    let eig = sym_eig(&normalized_laplacian(g), DEFAULT_EIG_TOL)?;
    let mut rng = SplitMix64::new(seed);
    let scale = (n as f64).sqrt();
    let coeffs: Vec<(f64, f64, f64, f64)> = (0..bandwidth)
        .map(|j| {
            let (a, b) = if j == 0 {
                (5.0, 0.5 * rng.uniform(0.5, 1.0))
            } else {
                (rng.normal(), rng.normal())
            };
            let f = 1.0 + rng.below(3) as f64;
            let phase = rng.uniform(0.0, 2.0 * PI);
            (a, b, f, phase)
        })
        .collect();
    let mut data = vec![0.0; n * nt];
    for t in 0..nt {
        for (j, &(a, b, f, phase)) in coeffs.iter().enumerate() {
            let c = scale * (a + b * (2.0 * PI * f * t as f64 / nt as f64 + phase).sin());
            for i in 0..n {
                data[i * nt + t] += c * eig.eigenvectors[(i, j)];
            }
        }
    }
    GridField::from_tensor(DenseTensor::new(vec![n, nt], data)?)
}
