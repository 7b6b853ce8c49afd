use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{sample_fourier_map, FourierConfig, FourierMap};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn, DenseMatrix};
use crate::rng::SplitMix64;

/// Activation used by the hidden layers. `Relu` exists for frequency ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sine,
    Relu,
}

/// Hyperparameters of one axis network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden width D.
    pub hidden: usize,
    /// Number L of hidden (sine) layers.
    pub depth: usize,
    pub out_dim: usize,
    pub first_omega0: f64,
    pub hidden_omega0: f64,
    pub activation: Activation,
    pub fourier: FourierConfig,
    /// Multiplier on the head's initial weights; small values start the factorization
    /// near zero.
    #[serde(default = "unit")]
    pub head_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl MlpConfig {
    pub fn input_dim(&self) -> usize {
        self.fourier.input_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.fourier.validate()?;
        if self.hidden == 0 || self.depth == 0 || self.out_dim == 0 {
            return Err(Error::invalid(
                "hidden width, depth and output size must be at least 1",
            ));
        }
        if !(self.head_scale.is_finite() && self.head_scale > 0.0) {
            return Err(Error::invalid("head_scale must be positive"));
        }
        for w in [self.first_omega0, self.hidden_omega0] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("omega0 {w} must be positive")));
            }
        }
        Ok(())
    }
}

/// Fully connected layer `W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dims("bias length does not match weight rows"));
        }
        Ok(Self { weight, bias })
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        Self {
            weight: uniform_init(out_dim, in_dim, rng),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `out[B×out] = x[B×in] Wᵀ + b`
    fn forward_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (o, i) = self.weight.shape();
        let mut out = Vec::with_capacity(batch * o);
        for _ in 0..batch {
            out.extend_from_slice(&self.bias);
        }
        gemm_nt(x, self.weight.as_slice(), &mut out, batch, i, o);
        out
    }
}

/// `sin(ω₀ · W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub omega0: f64,
}

impl SineLayer {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>, omega0: f64) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dims("bias length does not match weight rows"));
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::invalid("omega0 must be positive"));
        }
        Ok(Self {
            weight,
            bias,
            omega0,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let wx = self.weight.matvec(x)?;
        Ok(wx
            .iter()
            .zip(&self.bias)
            .map(|(a, b)| (self.omega0 * a + b).sin())
            .collect())
    }
}

/// Uniform on (−√(6/fan_in), √(6/fan_in)).
fn uniform_init(out_dim: usize, in_dim: usize, rng: &mut SplitMix64) -> DenseMatrix {
    let bound = init_bound(in_dim);
    let data = (0..out_dim * in_dim)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    DenseMatrix::from_raw(out_dim, in_dim, data)
}

pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// One axis network: Fourier encoding, a ReLU layer, `L` sine layers and a linear head.
///
/// With zero Fourier maps the ReLU layer reads the raw coordinate instead.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqMlp {
    pub(crate) fourier: FourierMap,
    pub(crate) input: Linear,
    pub(crate) hidden: Vec<SineLayer>,
    pub(crate) activation: Activation,
    pub(crate) head: Linear,
}

/// Builds an axis network. Fourier bases come from `cfg.fourier.seed`, weights from `seed`.
pub fn init_freq_mlp(cfg: &MlpConfig, seed: u64) -> Result<FreqMlp> {
    cfg.validate()?;
    let fourier = sample_fourier_map(&cfg.fourier)?;
    let mut rng = SplitMix64::new(seed);
    let enc_dim = encoding_dim(&fourier);
    let input = Linear::init(enc_dim, cfg.hidden, &mut rng);
    let hidden = (0..cfg.depth)
        .map(|l| {
            let omega0 = match (cfg.activation, l) {
                (Activation::Relu, _) => 1.0,
                (Activation::Sine, 0) => cfg.first_omega0,
                (Activation::Sine, _) => cfg.hidden_omega0,
            };
            SineLayer {
                weight: uniform_init(cfg.hidden, cfg.hidden, &mut rng),
                bias: vec![0.0; cfg.hidden],
                omega0,
            }
        })
        .collect();
    let mut head = Linear::init(cfg.hidden, cfg.out_dim, &mut rng);
    if cfg.head_scale != 1.0 {
        head.weight = head.weight.scale(cfg.head_scale);
    }
    Ok(FreqMlp {
        fourier,
        input,
        hidden,
        activation: cfg.activation,
        head,
    })
}

fn encoding_dim(fourier: &FourierMap) -> usize {
    if fourier.config().num_maps() == 0 {
        fourier.input_dim()
    } else {
        fourier.output_dim()
    }
}

/// Cached activations of a batch forward pass, consumed by [`FreqMlp::backward`].
pub(crate) struct MlpTrace {
    batch: usize,
    encoded: Vec<f64>,
    /// Pre-activations of the ReLU layer and every hidden layer.
    pre: Vec<Vec<f64>>,
    /// Inputs to every hidden layer and to the head.
    acts: Vec<Vec<f64>>,
}

impl FreqMlp {
    /// Assembles a network from explicit layers.
    pub fn from_parts(
        fourier: FourierMap,
        input: Linear,
        hidden: Vec<SineLayer>,
        activation: Activation,
        head: Linear,
    ) -> Result<Self> {
        if input.in_dim() != encoding_dim(&fourier) {
            return Err(Error::dims("input layer does not match the encoding size"));
        }
        let mut width = input.out_dim();
        for layer in &hidden {
            if layer.weight.cols() != width || layer.bias.len() != layer.weight.rows() {
                return Err(Error::dims("hidden layer dimensions do not chain"));
            }
            width = layer.weight.rows();
        }
        if hidden.is_empty() {
            return Err(Error::invalid("at least one hidden layer is required"));
        }
        if head.in_dim() != width {
            return Err(Error::dims("head does not match the last hidden width"));
        }
        Ok(Self {
            fourier,
            input,
            hidden,
            activation,
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.fourier.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn hidden_width(&self) -> usize {
        self.input.out_dim()
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn fourier(&self) -> &FourierMap {
        &self.fourier
    }

    pub fn input_layer(&self) -> &Linear {
        &self.input
    }

    pub fn hidden_layers(&self) -> &[SineLayer] {
        &self.hidden
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Evaluates the network on a row-major batch of coordinates (`batch × input_dim`).
    pub fn forward(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if coords.len() % d != 0 {
            return Err(Error::dims(format!(
                "{} values is not a whole batch of {d}-dimensional coordinates",
                coords.len()
            )));
        }
        let (out, _) = self.forward_traced(coords, coords.len() / d);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(out)
    }

    pub(crate) fn encode_batch(&self, coords: &[f64], batch: usize) -> Vec<f64> {
        let d = self.input_dim();
        if self.fourier.config().num_maps() == 0 {
            return coords[..batch * d].to_vec();
        }
        let e = self.fourier.output_dim();
        let mut encoded = vec![0.0; batch * e];
        for s in 0..batch {
            self.fourier.encode_into(
                &coords[s * d..(s + 1) * d],
                &mut encoded[s * e..(s + 1) * e],
            );
        }
        encoded
    }

    pub(crate) fn forward_traced(&self, coords: &[f64], batch: usize) -> (Vec<f64>, MlpTrace) {
        let encoded = self.encode_batch(coords, batch);
        let mut pre = Vec::with_capacity(self.hidden.len() + 1);
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);

        let z0 = self.input.forward_batch(&encoded, batch);
        let h: Vec<f64> = z0.iter().map(|&z| z.max(0.0)).collect();
        pre.push(z0);
        acts.push(h);

        for layer in &self.hidden {
            let x = acts.last().expect("non-empty");
            let (o, i) = layer.weight.shape();
            let mut wx = vec![0.0; batch * o];
            gemm_nt(x, layer.weight.as_slice(), &mut wx, batch, i, o);
            let z: Vec<f64> = wx
                .chunks_exact(o)
                .flat_map(|row| {
                    row.iter()
                        .zip(&layer.bias)
                        .map(|(a, b)| layer.omega0 * a + b)
                })
                .collect();
            let h: Vec<f64> = match self.activation {
                Activation::Sine => z.iter().map(|v| v.sin()).collect(),
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            };
            pre.push(z);
            acts.push(h);
        }

        let out = self
            .head
            .forward_batch(acts.last().expect("non-empty"), batch);
        (
            out,
            MlpTrace {
                batch,
                encoded,
                pre,
                acts,
            },
        )
    }

    /// Backpropagates `grad_out` (`batch × out_dim`) through a traced pass.
    ///
    /// Returns gradients in [`parameters`](Self::parameters) order.
    pub(crate) fn backward(&self, trace: &MlpTrace, grad_out: &[f64]) -> Vec<Vec<f64>> {
        let b = trace.batch;
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(2 * self.hidden.len() + 4);

        // Head.
        let (ho, hi) = self.head.weight.shape();
        let last = trace.acts.last().expect("non-empty");
        let mut gw = vec![0.0; ho * hi];
        gemm_tn(grad_out, last, &mut gw, b, ho, hi);
        let gb = column_sums(grad_out, b, ho);
        let mut gh = vec![0.0; b * hi];
        gemm_nn(grad_out, self.head.weight.as_slice(), &mut gh, b, ho, hi);
        let head_grads = (gw, gb);

        // Hidden layers, last to first.
        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            let z = &trace.pre[l + 1];
            let x = &trace.acts[l];
            let (o, i) = layer.weight.shape();
            let gz: Vec<f64> = match self.activation {
                Activation::Sine => gh.iter().zip(z).map(|(g, z)| g * z.cos()).collect(),
                Activation::Relu => gh
                    .iter()
                    .zip(z)
                    .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                    .collect(),
            };
            let mut gw = vec![0.0; o * i];
            gemm_tn(&gz, x, &mut gw, b, o, i);
            gw.iter_mut().for_each(|g| *g *= layer.omega0);
            let gb = column_sums(&gz, b, o);
            let mut gx = vec![0.0; b * i];
            gemm_nn(&gz, layer.weight.as_slice(), &mut gx, b, o, i);
            gx.iter_mut().for_each(|g| *g *= layer.omega0);
            hidden_grads.push((gw, gb));
            gh = gx;
        }
        hidden_grads.reverse();

        // ReLU input layer.
        let (o, i) = self.input.weight.shape();
        let gz: Vec<f64> = gh
            .iter()
            .zip(&trace.pre[0])
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        let mut gw = vec![0.0; o * i];
        gemm_tn(&gz, &trace.encoded, &mut gw, b, o, i);
        grads.push(gw);
        grads.push(column_sums(&gz, b, o));
        for (gw, gb) in hidden_grads {
            grads.push(gw);
            grads.push(gb);
        }
        grads.push(head_grads.0);
        grads.push(head_grads.1);
        grads
    }

    /// Trainable arrays: input weight/bias, each hidden weight/bias, head weight/bias.
    /// Fourier bases are frozen and not listed.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut p: Vec<&[f64]> = vec![self.input.weight.as_slice(), &self.input.bias];
        for l in &self.hidden {
            p.push(l.weight.as_slice());
            p.push(&l.bias);
        }
        p.push(self.head.weight.as_slice());
        p.push(&self.head.bias);
        p
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = vec![self.input.weight.as_mut_slice(), &mut self.input.bias];
        for l in &mut self.hidden {
            p.push(l.weight.as_mut_slice());
            p.push(&mut l.bias);
        }
        p.push(self.head.weight.as_mut_slice());
        p.push(&mut self.head.bias);
        p
    }
}

fn column_sums(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for r in 0..rows {
        for (acc, v) in s.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
            *acc += v;
        }
    }
    s
}

/// Free-function form of [`FreqMlp::forward`].
pub fn forward_mlp(mlp: &FreqMlp, coords: &[f64]) -> Result<Vec<f64>> {
    mlp.forward(coords)
}
