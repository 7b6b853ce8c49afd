//! Certified Lipschitz bounds for factorized models.
//!
//! All bounds measure input differences in ℓ₁ and intermediate vectors in ℓ∞, so every
//! linear map contributes its induced ∞-norm (maximum absolute row sum).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::factorized::FactorizedInr;
use crate::model::mlp::{Activation, FreqMlp};

/// Per-axis ingredients of the bound, for inputs whose ℓ₁ norm is at most `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzBound {
    /// Entrywise ℓ₁ norm of the core.
    pub eta: f64,
    /// The largest per-stage constant and per-axis output bound, floored at 1.
    pub xi: f64,
    /// Input norm bound, floored at 1.
    pub delta: f64,
    /// Stage count per axis network (encoding, ReLU layer, hidden layers, head), maximized.
    pub stages: usize,
    /// Lipschitz constant (ℓ₁ → ℓ∞) of each axis network.
    pub axis_lipschitz: Vec<f64>,
    /// Bound on ‖φ_k(v)‖∞ for ‖v‖₁ ≤ delta.
    pub axis_sup: Vec<f64>,
}

fn row_sum_norm(m: &DenseMatrix) -> f64 {
    m.inf_norm()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Stage constants of one axis network and the bound on its output magnitude.
fn axis_constants(net: &FreqMlp, delta: f64) -> (Vec<f64>, f64) {
    let mut stages = Vec::with_capacity(net.depth() + 3);
    let fourier = net.fourier();
    // |sin(2π bᵀu) − sin(2π bᵀu′)| ≤ 2π ‖b‖∞ ‖u − u′‖₁, likewise for cosine.
    let (enc_lip, mut sup) = if fourier.config().num_maps() == 0 {
        (1.0, delta)
    } else {
        let m = fourier
            .bases()
            .iter()
            .map(|b| b.max_abs())
            .fold(0.0, f64::max);
        (2.0 * PI * m, 1.0)
    };
    stages.push(enc_lip);

    let input = net.input_layer();
    stages.push(row_sum_norm(&input.weight));
    sup = row_sum_norm(&input.weight) * sup + max_abs(&input.bias);

    for layer in net.hidden_layers() {
        let lip = layer.omega0 * row_sum_norm(&layer.weight);
        stages.push(lip);
        sup = match net.activation() {
            Activation::Sine => 1.0,
            Activation::Relu => lip * sup + max_abs(&layer.bias),
        };
    }

    let head = net.head();
    stages.push(row_sum_norm(&head.weight));
    sup = row_sum_norm(&head.weight) * sup + max_abs(&head.bias);
    (stages, sup)
}

/// Computes the bound ingredients for inputs with ℓ₁ norm at most `delta`.
pub fn lipschitz_bound(model: &FactorizedInr, delta: f64) -> Result<LipschitzBound> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid("delta must be a finite nonnegative norm"));
    }
    let delta = delta.max(1.0);
    let eta: f64 = model.core().as_slice().iter().map(|x| x.abs()).sum();
    let mut xi: f64 = 1.0;
    let mut stages = 0;
    let mut axis_lipschitz = Vec::new();
    let mut axis_sup = Vec::new();
    for axis in model.axes() {
        let (consts, sup) = axis_constants(&axis.net, delta);
        stages = stages.max(consts.len());
        xi = consts.iter().copied().fold(xi, f64::max).max(sup);
        axis_lipschitz.push(consts.iter().product());
        axis_sup.push(sup);
    }
    Ok(LipschitzBound {
        eta,
        xi,
        delta,
        stages,
        axis_lipschitz,
        axis_sup,
    })
}

impl LipschitzBound {
    /// `η · ξ^{nL} · δ^{n−1} · ‖e − e′‖₁` with `n` axes and `L` stages per axis.
    pub fn closed_form(&self, e: &[Vec<f64>], e_prime: &[Vec<f64>]) -> f64 {
        let n = self.axis_sup.len() as i32;
        let dist: f64 = l1_distances(e, e_prime).iter().sum();
        self.eta * self.xi.powi(n * self.stages as i32) * self.delta.powi(n - 1) * dist
    }

    /// The telescoping bound `η Σ_k Lip_k ‖Δe_k‖₁ Π_{j≠k} sup_j`, never larger than
    /// [`closed_form`](Self::closed_form).
    pub fn telescoped(&self, e: &[Vec<f64>], e_prime: &[Vec<f64>]) -> f64 {
        let d = l1_distances(e, e_prime);
        let mut total = 0.0;
        for (k, dk) in d.iter().enumerate() {
            let others: f64 = self
                .axis_sup
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, s)| s)
                .product();
            total += self.axis_lipschitz[k] * dk * others;
        }
        self.eta * total
    }
}

fn l1_distances(e: &[Vec<f64>], e_prime: &[Vec<f64>]) -> Vec<f64> {
    e.iter()
        .zip(e_prime)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
        .collect()
}
