use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, DenseMatrix, DenseTensor};
use crate::model::mlp::{init_freq_mlp, FreqMlp, MlpConfig, MlpTrace};
use crate::rng::SplitMix64;

/// What a scalar axis coordinate means.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisDomain {
    /// A normalized real coordinate fed to the axis network as-is.
    Continuous,
    /// A node index; the axis network reads row `index` of the embedding.
    Graph { embedding: DenseMatrix },
}

impl AxisDomain {
    pub fn input_dim(&self) -> usize {
        match self {
            AxisDomain::Continuous => 1,
            AxisDomain::Graph { embedding } => embedding.cols(),
        }
    }

    /// The network input for one scalar coordinate.
    pub fn input_for(&self, coord: f64) -> Result<Vec<f64>> {
        match self {
            AxisDomain::Continuous => {
                if !coord.is_finite() {
                    return Err(Error::NonFinite("axis coordinate".into()));
                }
                Ok(vec![coord])
            }
            AxisDomain::Graph { embedding } => {
                let node = node_index(coord, embedding.rows())?;
                Ok(embedding.row(node).to_vec())
            }
        }
    }
}

fn node_index(coord: f64, nodes: usize) -> Result<usize> {
    let r = coord.round();
    if !(r >= 0.0 && r < nodes as f64) || (coord - r).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "graph coordinate {coord} is not a node index below {nodes}"
        )));
    }
    Ok(r as usize)
}

/// Which array a model parameter belongs to; decides weight-decay eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    Core,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub domain: AxisDomain,
    pub net: FreqMlp,
}

/// Per-axis networks joined by a core tensor.
///
/// The prediction at `(v_1, …, v_c)` is `core ×_1 Φ_1(v_1) ×_2 ⋯ ×_c Φ_c(v_c)`. For two axes
/// the core is the middle matrix and the prediction is `Φ_x(x)ᵀ M Φ_t(t)`. With more than one
/// output channel the core has a trailing mode of that size.
#[derive(Debug)]
pub struct FactorizedInr {
    pub(crate) axes: Vec<Axis>,
    pub(crate) core: DenseTensor,
    pub(crate) out_channels: usize,
    evaluations: AtomicU64,
}

impl Clone for FactorizedInr {
    fn clone(&self) -> Self {
        Self {
            axes: self.axes.clone(),
            core: self.core.clone(),
            out_channels: self.out_channels,
            evaluations: AtomicU64::new(0),
        }
    }
}

impl PartialEq for FactorizedInr {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes
            && self.core == other.core
            && self.out_channels == other.out_channels
    }
}

/// Superdiagonal ones: `core[i, …, i(, o)] = 1` for `i < min(dims)`.
pub fn diagonal_core(dims: &[usize], out_channels: usize) -> DenseTensor {
    let mut shape = dims.to_vec();
    if out_channels > 1 {
        shape.push(out_channels);
    }
    let mut core = DenseTensor::zeros(shape);
    let n = dims.iter().copied().min().unwrap_or(0);
    for i in 0..n {
        let mut idx = vec![i; dims.len()];
        if out_channels > 1 {
            idx.push(0);
            for o in 0..out_channels {
                *idx.last_mut().expect("non-empty") = o;
                core.set(&idx, 1.0);
            }
        } else {
            core.set(&idx, 1.0);
        }
    }
    core
}

impl FactorizedInr {
    /// Initializes one network per axis (weights seeded per axis from `seed`) and a
    /// diagonal core.
    pub fn init(
        axes: Vec<(AxisDomain, MlpConfig)>,
        out_channels: usize,
        seed: u64,
    ) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("a model needs at least one axis"));
        }
        if out_channels == 0 {
            return Err(Error::invalid("out_channels must be at least 1"));
        }
        let mut built = Vec::with_capacity(axes.len());
        for (i, (domain, cfg)) in axes.into_iter().enumerate() {
            if cfg.input_dim() != domain.input_dim() {
                return Err(Error::dims(format!(
                    "axis {i}: network input {} but domain provides {}",
                    cfg.input_dim(),
                    domain.input_dim()
                )));
            }
            let weight_seed = SplitMix64::derive(seed, i as u64).next_u64();
            built.push(Axis {
                domain,
                net: init_freq_mlp(&cfg, weight_seed)?,
            });
        }
        let dims: Vec<usize> = built.iter().map(|a| a.net.out_dim()).collect();
        let core = diagonal_core(&dims, out_channels);
        Self::from_parts(built, core, out_channels)
    }

    pub fn from_parts(axes: Vec<Axis>, core: DenseTensor, out_channels: usize) -> Result<Self> {
        let mut expected: Vec<usize> = axes.iter().map(|a| a.net.out_dim()).collect();
        if out_channels > 1 {
            expected.push(out_channels);
        }
        if core.shape() != expected.as_slice() {
            return Err(Error::dims(format!(
                "core shape {:?} does not match axis outputs {expected:?}",
                core.shape()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.net.input_dim() != a.domain.input_dim() {
                return Err(Error::dims(format!(
                    "axis {i} input does not match its domain"
                )));
            }
        }
        Ok(Self {
            axes,
            core,
            out_channels,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn arity(&self) -> usize {
        self.axes.len()
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut DenseTensor {
        &mut self.core
    }

    pub fn axis_net_mut(&mut self, axis: usize) -> &mut FreqMlp {
        &mut self.axes[axis].net
    }

    /// Number of single-point axis network evaluations since creation or the last reset.
    pub fn axis_evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_axis_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    /// Evaluates axis `k` on a list of scalar coordinates; returns `n × out_dim` row-major.
    pub fn eval_axis(&self, k: usize, coords: &[f64]) -> Result<Vec<f64>> {
        let inputs = self.axis_inputs(k, coords)?;
        let (out, _) = self.axes[k].net.forward_traced(&inputs, coords.len());
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("axis {k} network output")));
        }
        Ok(out)
    }

    pub(crate) fn eval_axis_traced(
        &self,
        k: usize,
        coords: &[f64],
    ) -> Result<(Vec<f64>, MlpTrace)> {
        let inputs = self.axis_inputs(k, coords)?;
        let (out, trace) = self.axes[k].net.forward_traced(&inputs, coords.len());
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("axis {k} network output")));
        }
        Ok((out, trace))
    }

    fn axis_inputs(&self, k: usize, coords: &[f64]) -> Result<Vec<f64>> {
        self.evaluations
            .fetch_add(coords.len() as u64, Ordering::Relaxed);
        let domain = &self.axes[k].domain;
        let mut inputs = Vec::with_capacity(coords.len() * domain.input_dim());
        for &c in coords {
            inputs.extend(domain.input_for(c)?);
        }
        Ok(inputs)
    }

    /// Contracts the core with one vector per axis, returning the `out_channels` values.
    pub fn contract(&self, factors: &[&[f64]]) -> Vec<f64> {
        contract_core(&self.core, factors, self.out_channels)
    }

    /// Prediction at one coordinate tuple.
    pub fn forward(&self, coord: &[f64]) -> Result<Vec<f64>> {
        if coord.len() != self.arity() {
            return Err(Error::dims(format!(
                "coordinate tuple of arity {} for a model with {} axes",
                coord.len(),
                self.arity()
            )));
        }
        let outs = coord
            .iter()
            .enumerate()
            .map(|(k, &c)| self.eval_axis(k, &[c]))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        Ok(self.contract(&refs))
    }

    /// Prediction from explicit network inputs, one vector per axis, bypassing the axis
    /// domains (for example a point of a graph axis' embedding space between nodes).
    pub fn forward_inputs(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.len() != self.arity() {
            return Err(Error::dims("one input vector per axis is required"));
        }
        let outs = inputs
            .iter()
            .zip(&self.axes)
            .map(|(x, a)| {
                if x.len() != a.net.input_dim() {
                    return Err(Error::dims("axis input has the wrong dimension"));
                }
                self.evaluations.fetch_add(1, Ordering::Relaxed);
                a.net.forward(x)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        Ok(self.contract(&refs))
    }

    /// Predictions for a row-major batch of coordinate tuples (`m × arity`), returned as
    /// `m × out_channels`. Each distinct coordinate value is evaluated once per axis.
    pub fn predict(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let c = self.arity();
        if coords.len() % c != 0 {
            return Err(Error::dims(
                "coordinate batch is not a whole number of tuples",
            ));
        }
        let m = coords.len() / c;
        let mut per_axis = Vec::with_capacity(c);
        for k in 0..c {
            let column: Vec<f64> = (0..m).map(|s| coords[s * c + k]).collect();
            let (unique, index) = dedupe(&column);
            let out = self.eval_axis(k, &unique)?;
            per_axis.push((out, index));
        }
        let mut preds = Vec::with_capacity(m * self.out_channels);
        let dims: Vec<usize> = self.axes.iter().map(|a| a.net.out_dim()).collect();
        for s in 0..m {
            let refs: Vec<&[f64]> = per_axis
                .iter()
                .zip(&dims)
                .map(|((out, index), &d)| &out[index[s] * d..(index[s] + 1) * d])
                .collect();
            preds.extend(self.contract(&refs));
        }
        Ok(preds)
    }

    /// Evaluates the model on the Cartesian grid of per-axis coordinate lists.
    ///
    /// Each axis network runs once per list entry (Σ nᵢ evaluations), then the core is
    /// contracted with the stacked factor matrices by successive mode products. The result
    /// has shape `n_1 × ⋯ × n_c` (with a trailing channel mode when `out_channels > 1`).
    pub fn forward_grid(&self, axis_coords: &[Vec<f64>]) -> Result<DenseTensor> {
        if axis_coords.len() != self.arity() {
            return Err(Error::dims("one coordinate list per axis is required"));
        }
        if let Some(k) = axis_coords.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("axis {k} has no coordinates")));
        }
        let mut t = self.core.clone();
        for (k, coords) in axis_coords.iter().enumerate() {
            let out = self.eval_axis(k, coords)?;
            let factor = DenseMatrix::from_raw(coords.len(), self.axes[k].net.out_dim(), out);
            t = t.mode_n_product(&factor, k)?;
        }
        Ok(t)
    }

    /// Trainable arrays in a fixed order: every axis network's parameters, then the core.
    pub fn parameters(&self) -> Vec<(ParamKind, &[f64])> {
        let mut p = Vec::new();
        for axis in &self.axes {
            for (i, arr) in axis.net.parameters().into_iter().enumerate() {
                p.push((
                    if i % 2 == 0 {
                        ParamKind::Weight
                    } else {
                        ParamKind::Bias
                    },
                    arr,
                ));
            }
        }
        p.push((ParamKind::Core, self.core.as_slice()));
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let mut p = Vec::new();
        for axis in &mut self.axes {
            for (i, arr) in axis.net.parameters_mut().into_iter().enumerate() {
                p.push((
                    if i % 2 == 0 {
                        ParamKind::Weight
                    } else {
                        ParamKind::Bias
                    },
                    arr,
                ));
            }
        }
        p.push((ParamKind::Core, self.core.as_mut_slice()));
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, a)| a.len()).sum()
    }
}

/// `Σ_{i_1..i_c} core[i_1..i_c(, o)] Π_k factors[k][i_k]`.
pub(crate) fn contract_core(core: &DenseTensor, factors: &[&[f64]], channels: usize) -> Vec<f64> {
    let shape = core.shape();
    let c = factors.len();
    debug_assert_eq!(shape.len(), c + usize::from(channels > 1));
    let data = core.as_slice();
    if c == 2 && channels == 1 {
        // uᵀM first, then the dot with v; training uses the same order.
        let mut p = vec![0.0; shape[1]];
        gemm_nn(factors[0], data, &mut p, 1, shape[0], shape[1]);
        return vec![p.iter().zip(factors[1]).map(|(x, y)| x * y).sum()];
    }
    // Contract the leading modes one at a time.
    let mut current = data.to_vec();
    let mut rest: usize = shape.iter().product();
    for (k, f) in factors.iter().enumerate() {
        let n = shape[k];
        rest /= n;
        let mut next = vec![0.0; rest];
        for (i, &fi) in f.iter().enumerate() {
            if fi == 0.0 {
                continue;
            }
            for (dst, src) in next.iter_mut().zip(&current[i * rest..(i + 1) * rest]) {
                *dst += fi * src;
            }
        }
        current = next;
    }
    debug_assert_eq!(current.len(), channels);
    current
}

/// Distinct values (by bit pattern, first-seen order) and the index of each input value.
pub(crate) fn dedupe(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut seen: HashMap<u64, usize> = HashMap::with_capacity(values.len());
    let mut unique = Vec::new();
    let index = values
        .iter()
        .map(|&v| {
            *seen.entry(v.to_bits()).or_insert_with(|| {
                unique.push(v);
                unique.len() - 1
            })
        })
        .collect();
    (unique, index)
}

/// Free-function form of [`FactorizedInr::forward`].
pub fn forward_factorized(model: &FactorizedInr, coord: &[f64]) -> Result<Vec<f64>> {
    model.forward(coord)
}

/// Free-function form of [`FactorizedInr::forward_grid`].
pub fn forward_grid(model: &FactorizedInr, axis_coords: &[Vec<f64>]) -> Result<DenseTensor> {
    model.forward_grid(axis_coords)
}
