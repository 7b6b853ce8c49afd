use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorizedInr, ParamKind};
use crate::train::backward::GradientSet;
use crate::train::TrainConfig;

/// Adam moment estimates, one array per parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &FactorizedInr) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .parameters()
            .iter()
            .map(|(_, a)| vec![0.0; a.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam step followed by decoupled decay `w ← w(1 − ηλ)` on network
/// weight matrices. Biases and the core are never decayed; Fourier bases are not trainable.
pub fn adam_step(
    model: &mut FactorizedInr,
    grads: &GradientSet,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut params = model.parameters_mut();
    if grads.arrays.len() != params.len()
        || state.m.len() != params.len()
        || params
            .iter()
            .zip(&grads.arrays)
            .zip(&state.m)
            .any(|(((_, p), g), m)| p.len() != g.len() || p.len() != m.len())
    {
        return Err(Error::dims(
            "gradients or optimizer state do not match the model",
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((kind, p), g), (m, v)) in params
        .iter_mut()
        .zip(&grads.arrays)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
        }
        if *kind == ParamKind::Weight && cfg.weight_decay != 0.0 {
            p.iter_mut().for_each(|w| *w *= decay);
        }
    }
    Ok(())
}
