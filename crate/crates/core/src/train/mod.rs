//! Gradients, the Adam optimizer and the minibatch training loop.

pub mod adam;
pub mod backward;
mod exact;
pub mod gradcheck;
pub mod loss;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use backward::{backward, batch_loss, GradientSet};
pub use gradcheck::{grad_check, GradCheck, GRAD_CHECK_FLOOR};
pub use loss::mse_loss;
pub use trainer::{evaluate_mse, train, LossCurve, DIVERGENCE_FACTOR};

/// Optimizer and loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled per-step decay on network weight matrices.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Seeds minibatch sampling.
    pub seed: u64,
    /// Record the loss every this many steps (the final step is always recorded).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size: 1024,
            steps: 2000,
            seed: 0,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("Adam beta {b} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        if self.learning_rate * self.weight_decay >= 1.0 {
            return Err(Error::invalid(
                "learning_rate × weight_decay must be below 1",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}
