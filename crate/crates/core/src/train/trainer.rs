use std::io::Write;
use std::path::Path;

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::model::FactorizedInr;
use crate::rng::SplitMix64;
use crate::train::adam::{adam_step, AdamState};
use crate::train::backward::{backward, batch_loss};
use crate::train::TrainConfig;

/// Loss divergence threshold relative to the first batch loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// `(step, batch MSE)` pairs with strictly increasing steps (1-based).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<(usize, f64)>,
}

impl LossCurve {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (step, loss) in &self.points {
            s.push_str(&format!("{step},{loss:.17e}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Epoch-wise sampling without replacement.
struct BatchSampler {
    rng: SplitMix64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let order = rng.permutation(n);
        Self {
            rng,
            order,
            cursor: 0,
        }
    }

    fn next(&mut self, size: usize) -> &[usize] {
        if self.cursor >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let end = (self.cursor + size).min(self.order.len());
        let batch = &self.order[self.cursor..end];
        self.cursor = end;
        batch
    }
}

/// Runs `cfg.steps` iterations of sample → forward → backward → Adam on normalized
/// observations. Batches are drawn from per-epoch permutations seeded by `cfg.seed`.
pub fn train(
    model: &mut FactorizedInr,
    obs: &ObservationSet,
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::invalid("no observations to train on"));
    }
    if obs.arity() != model.arity() || obs.channels() != model.out_channels() {
        return Err(Error::dims(
            "observations do not match the model's axes or channels",
        ));
    }
    let mut curve = LossCurve::default();
    let mut state = AdamState::new(model);
    let mut sampler = BatchSampler::new(obs.len(), cfg.seed);
    let (c, ch) = (obs.arity(), obs.channels());
    let mut initial = None;
    let mut coords = Vec::with_capacity(cfg.batch_size * c);
    let mut targets = Vec::with_capacity(cfg.batch_size * ch);
    for step in 1..=cfg.steps {
        coords.clear();
        targets.clear();
        for &i in sampler.next(cfg.batch_size) {
            coords.extend_from_slice(obs.coords.row(i));
            targets.extend_from_slice(obs.values.row(i));
        }
        let (loss, grads) = match backward(model, &coords, &targets) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Divergence {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        let first = *initial.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * first.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence { step, loss });
        }
        if step % cfg.log_every.max(1) == 0 || step == cfg.steps {
            curve.points.push((step, loss));
        }
        if step % 500 == 0 {
            log::debug!("step {step}: loss {loss:.6e}");
        }
        adam_step(model, &grads, &mut state, cfg)?;
    }
    Ok(curve)
}

/// MSE of the model over a whole observation set.
pub fn evaluate_mse(model: &FactorizedInr, obs: &ObservationSet) -> Result<f64> {
    batch_loss(model, obs.coords.as_slice(), obs.values.as_slice())
}
