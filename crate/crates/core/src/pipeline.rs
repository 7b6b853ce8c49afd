//! End-to-end fitting on gridded data: normalization, model construction, training and
//! grid prediction.

use serde::{Deserialize, Serialize};

use crate::data::{AxisTransform, GridField, Normalizer, ObservationSet};
use crate::error::{Error, Result};
use crate::features::{FourierConfig, DEFAULT_SCALES};
use crate::graph::{spectral_embedding, GraphSpec, DEFAULT_EMBEDDING_DIM};
use crate::linalg::DenseTensor;
use crate::model::{Activation, AxisDomain, FactorizedInr, MlpConfig, ModelBundle};
use crate::rng::SplitMix64;
use crate::train::{train, LossCurve, TrainConfig};

/// Architecture shared by every axis network of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width D.
    pub hidden: usize,
    /// Number L of hidden layers.
    pub depth: usize,
    /// Axis output size n_i. `None` uses the smallest grid extent (full-dimensional).
    pub factor_dim: Option<usize>,
    pub first_omega0: f64,
    pub hidden_omega0: f64,
    pub activation: Activation,
    /// Fourier scale ladder; empty feeds raw coordinates to the networks.
    pub scales: Vec<f64>,
    pub rows_per_map: usize,
    pub head_scale: f64,
    /// Spectral embedding size for graph axes.
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            depth: 2,
            factor_dim: None,
            first_omega0: 1.0,
            hidden_omega0: 1.0,
            activation: Activation::Sine,
            scales: DEFAULT_SCALES.to_vec(),
            rows_per_map: 16,
            head_scale: 1.0,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor_dim == Some(0) {
            return Err(Error::invalid("factor_dim must be at least 1"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim must be at least 1"));
        }
        self.axis_config(1, 1, 0).validate()
    }

    fn axis_config(&self, input_dim: usize, out_dim: usize, fourier_seed: u64) -> MlpConfig {
        let fourier = if self.scales.is_empty() {
            FourierConfig::disabled(input_dim)
        } else {
            FourierConfig::new(
                self.scales.clone(),
                self.rows_per_map,
                input_dim,
                fourier_seed,
            )
        };
        MlpConfig {
            hidden: self.hidden,
            depth: self.depth,
            out_dim,
            first_omega0: self.first_omega0,
            hidden_omega0: self.hidden_omega0,
            activation: self.activation,
            fourier,
            head_scale: self.head_scale,
        }
    }
}

/// The graph attached to one axis of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAxis {
    pub axis: usize,
    pub graph: GraphSpec,
}

/// Builds an untrained model for a grid with the given extents.
///
/// Fourier bases and weights of every axis derive from `seed`.
pub fn build_model(
    dims: &[usize],
    channels: usize,
    cfg: &ModelConfig,
    graph: Option<&GraphAxis>,
    seed: u64,
) -> Result<FactorizedInr> {
    let factor_dim = match cfg.factor_dim {
        Some(d) => d,
        None => *dims.iter().min().ok_or_else(|| Error::invalid("no axes"))?,
    };
    let mut axes = Vec::with_capacity(dims.len());
    for (k, &n) in dims.iter().enumerate() {
        let domain = match graph {
            Some(g) if g.axis == k => {
                if g.graph.node_count() != n {
                    return Err(Error::dims(format!(
                        "graph has {} nodes but axis {k} has {n} entries",
                        g.graph.node_count()
                    )));
                }
                let e = spectral_embedding(&g.graph, cfg.embedding_dim.min(n))?;
                AxisDomain::Graph {
                    embedding: e.coords,
                }
            }
            _ => AxisDomain::Continuous,
        };
        let fourier_seed = SplitMix64::derive(seed, 1000 + k as u64).next_u64();
        let mlp = cfg.axis_config(domain.input_dim(), factor_dim, fourier_seed);
        axes.push((domain, mlp));
    }
    FactorizedInr::init(axes, channels, seed)
}

/// A trained model with its loss history.
#[derive(Debug, Clone)]
pub struct Fit {
    pub bundle: ModelBundle,
    pub curve: LossCurve,
}

/// Fits a model to `train` (raw grid-index coordinates of `field`).
///
/// The normalizer is estimated from the training cells only.
pub fn fit_field(
    field: &GridField,
    train_obs: &ObservationSet,
    graph: Option<&GraphAxis>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<Fit> {
    let mut mask = vec![false; field.cells()];
    for &c in &train_obs.cells {
        mask[c] = true;
    }
    let train_field = field.clone().with_mask(Some(mask))?;
    let graph_axes: Vec<usize> = graph.map(|g| vec![g.axis]).unwrap_or_default();
    let normalizer = Normalizer::fit(&train_field, &graph_axes)?;
    let obs = train_obs.normalized(&normalizer)?;
    let mut model = build_model(field.dims(), field.channels(), model_cfg, graph, model_seed)?;
    let curve = train(&mut model, &obs, train_cfg)?;
    Ok(Fit {
        bundle: ModelBundle::new(model, Some(normalizer)),
        curve,
    })
}

/// Per-axis normalized coordinates of the grid `dims` refined by `factor` along continuous
/// axes: `n · factor` points at raw positions `p / factor`, so every `factor`-th point is
/// an original grid index. Graph axes keep their node indices.
pub fn axis_coordinates(normalizer: &Normalizer, dims: &[usize], factor: usize) -> Vec<Vec<f64>> {
    dims.iter()
        .enumerate()
        .map(|(k, &n)| {
            let f = match normalizer.axes[k] {
                AxisTransform::Index => 1,
                AxisTransform::Affine { .. } => factor,
            };
            (0..n * f)
                .map(|p| normalizer.coord(k, p as f64 / f as f64))
                .collect()
        })
        .collect()
}

/// The training grid extents recorded by a bundle: continuous axes from the normalizer's
/// `0..n-1` range, graph axes from their node count.
pub fn grid_dims(bundle: &ModelBundle) -> Result<Vec<usize>> {
    let normalizer = bundle
        .normalizer
        .as_ref()
        .ok_or_else(|| Error::invalid("model file carries no normalizer"))?;
    normalizer
        .axes
        .iter()
        .zip(bundle.model.axes())
        .map(|(t, axis)| match (t, &axis.domain) {
            (_, AxisDomain::Graph { embedding }) => Ok(embedding.rows()),
            (
                AxisTransform::Affine {
                    center,
                    half_extent,
                },
                _,
            ) => {
                let n = 2.0 * half_extent + 1.0;
                if (center - half_extent).abs() > 1e-9 || (n - n.round()).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "axis range does not describe a 0-based grid",
                    ));
                }
                Ok(n.round() as usize)
            }
            (AxisTransform::Index, _) => Err(Error::invalid("index axis without a graph")),
        })
        .collect()
}

/// Evaluates a bundle on the grid `dims` refined by `factor` (see [`axis_coordinates`]) and
/// returns denormalized values.
pub fn predict_grid(bundle: &ModelBundle, dims: &[usize], factor: usize) -> Result<GridField> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be at least 1"));
    }
    let normalizer = bundle
        .normalizer
        .clone()
        .unwrap_or_else(|| Normalizer::identity(dims.len(), bundle.model.out_channels()));
    if normalizer.axes.len() != dims.len() {
        return Err(Error::dims("grid arity does not match the model"));
    }
    let coords = axis_coordinates(&normalizer, dims, factor);
    let t = bundle.model.forward_grid(&coords)?;
    let ch = bundle.model.out_channels();
    let data: Vec<f64> = t
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &z)| normalizer.raw_value(i % ch, z))
        .collect();
    GridField::new(DenseTensor::new(t.shape().to_vec(), data)?, ch, None)
}

/// Splits the observed cells of `field` into cells on visible slices of `axis` and cells on
/// the `hidden` slices (held out entirely, as for never-observed sensors).
pub fn split_hidden(
    field: &GridField,
    axis: usize,
    hidden: &[usize],
) -> Result<(ObservationSet, ObservationSet)> {
    let n = *field
        .dims()
        .get(axis)
        .ok_or_else(|| Error::invalid(format!("axis {axis} out of range")))?;
    let mut is_hidden = vec![false; n];
    for &h in hidden {
        if h >= n {
            return Err(Error::invalid(format!("hidden index {h} outside 0..{n}")));
        }
        is_hidden[h] = true;
    }
    if !is_hidden.iter().any(|&h| h) {
        return Err(Error::invalid("no slices are hidden"));
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for cell in (0..field.cells()).filter(|&c| field.is_observed(c)) {
        if is_hidden[field.cell_index(cell)[axis]] {
            held.push(cell);
        } else {
            train.push(cell);
        }
    }
    if train.is_empty() {
        return Err(Error::invalid("every observed cell is hidden"));
    }
    Ok((
        ObservationSet::from_cells(field, train),
        ObservationSet::from_cells(field, held),
    ))
}

/// Hidden nodes whose connected component contains no visible node.
pub fn unreachable_hidden(graph: &GraphSpec, hidden: &[usize]) -> Vec<usize> {
    let n = graph.node_count();
    let a = graph.adjacency();
    let mut is_hidden = vec![false; n];
    for &h in hidden.iter().filter(|&&h| h < n) {
        is_hidden[h] = true;
    }
    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| !is_hidden[i]).collect();
    for &i in &stack {
        reached[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if a[(i, j)] > 0.0 && !reached[j] {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    (0..n).filter(|&i| is_hidden[i] && !reached[i]).collect()
}
