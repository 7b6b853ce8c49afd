use crate::error::{Error, Result};
use crate::model::FactorizedInr;
use crate::train::backward::backward;
use crate::train::exact::{Dd, ExactBatch, Perturbation};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|a − n| / max(|a|, |n|, floor)` over all parameters.
    pub max_relative_error: f64,
    /// Largest `|a − n|`.
    pub max_absolute_error: f64,
    pub parameters_checked: usize,
}

/// Smallest gradient magnitude used as the relative-error denominator, so exactly zero
/// gradients compare absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares [`backward`] against central differences `(L(θ+ε) − L(θ−ε)) / 2ε` for every
/// trainable parameter. The perturbed losses are evaluated in double-double arithmetic so
/// cancellation does not mask small gradient entries.
pub fn grad_check(
    model: &FactorizedInr,
    coords: &[f64],
    targets: &[f64],
    epsilon: f64,
) -> Result<GradCheck> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, grads) = backward(model, coords, targets)?;
    let exact = ExactBatch::new(model, coords, targets)?;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut count = 0;
    for (a, analytic) in grads.arrays.iter().enumerate() {
        for (i, &ga) in analytic.iter().enumerate() {
            let original = Dd::new(model.parameters()[a].1[i]);
            let loss_at = |step: f64| {
                let value = original + Dd::new(step);
                exact.loss(Some(Perturbation {
                    array: a,
                    index: i,
                    value,
                }))
            };
            let up = loss_at(epsilon);
            let down = loss_at(-epsilon);
            let numeric = (up - down).to_f64() / (2.0 * epsilon);
            let err = (ga - numeric).abs();
            max_abs = max_abs.max(err);
            max_rel = max_rel.max(err / ga.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR));
            count += 1;
        }
    }
    Ok(GradCheck {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        parameters_checked: count,
    })
}
