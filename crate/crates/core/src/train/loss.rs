use crate::error::{Error, Result};

/// Mean over the batch of squared ℓ₂ residuals. `preds` and `targets` are row-major
/// `batch × channels`.
pub fn mse_loss(preds: &[f64], targets: &[f64], channels: usize) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::dims("predictions and targets differ in length"));
    }
    if preds.is_empty() || channels == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if preds.len() % channels != 0 {
        return Err(Error::dims("batch is not a whole number of samples"));
    }
    let batch = preds.len() / channels;
    let sq: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sq / batch as f64)
}
