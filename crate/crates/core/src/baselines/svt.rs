use serde::{Deserialize, Serialize};

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::linalg::{svd, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvtConfig {
    /// Singular value threshold τ.
    pub tau: f64,
    /// Gradient step δ on the observed-entry residual.
    pub step: f64,
    pub max_iterations: usize,
    /// Stop once `‖X_{k+1} − X_k‖_F ≤ tolerance · max(‖X_k‖_F, 1)`.
    pub tolerance: f64,
}

impl Default for SvtConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            step: 1.0,
            max_iterations: 2000,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvtResult {
    /// Observed entries from the data, unobserved entries from the low-rank iterate.
    pub completed: DenseMatrix,
    /// The low-rank iterate `X`.
    pub low_rank: DenseMatrix,
    /// `‖X‖_*`.
    pub nuclear_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

impl SvtResult {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                what: "singular value thresholding",
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

/// Singular value soft-thresholding `D_τ(A) = U max(Σ − τ, 0) Vᵀ`; also returns `‖D_τ(A)‖_*`.
pub fn shrink(a: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, f64)> {
    let s = svd(a)?;
    let (m, n) = a.shape();
    let mut out = DenseMatrix::zeros(m, n);
    let mut nuc = 0.0;
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        let t = sigma - tau;
        if t <= 0.0 {
            continue;
        }
        nuc += t;
        for i in 0..m {
            let ui = s.u[(i, k)] * t;
            if ui == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += ui * s.v[(j, k)];
            }
        }
    }
    Ok((out, nuc))
}

/// Nuclear-norm regularized completion by proximal gradient:
/// `X ← D_{τδ}(X + δ P_Ω(M − X))`, started at `X₀ = P_Ω M`.
///
/// Each step decreases `½‖P_Ω(M − X)‖² + τ‖X‖_*`, so every iterate satisfies
/// `‖X‖_* ≤ ‖P_Ω M‖_*`.
pub fn svt_complete(field: &GridField, cfg: &SvtConfig) -> Result<SvtResult> {
    if !(cfg.tau > 0.0) || !(cfg.step > 0.0 && cfg.step <= 1.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::invalid(
            "τ > 0, 0 < step ≤ 1 and tolerance > 0 are required",
        ));
    }
    if field.arity() != 2 || field.channels() != 1 {
        return Err(Error::dims(
            "matrix completion needs a single-channel 2-axis field",
        ));
    }
    let (rows, cols) = (field.dims()[0], field.dims()[1]);
    let mask: Vec<bool> = (0..field.cells()).map(|c| field.is_observed(c)).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("no observed entries"));
    }
    let observed: Vec<f64> = (0..field.cells())
        .map(|c| {
            if mask[c] {
                field.cell_values(c)[0]
            } else {
                0.0
            }
        })
        .collect();
    let mut x = DenseMatrix::new(rows, cols, observed.clone())?;
    let mut nuclear = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut y = x.clone();
        for (c, yv) in y.as_mut_slice().iter_mut().enumerate() {
            if mask[c] {
                *yv += cfg.step * (observed[c] - *yv);
            }
        }
        let (next, nuc) = shrink(&y, cfg.tau * cfg.step)?;
        let change = next.sub(&x)?.frobenius_norm();
        residual = change / x.frobenius_norm().max(1.0);
        x = next;
        nuclear = nuc;
        if residual <= cfg.tolerance {
            break;
        }
    }
    let converged = residual <= cfg.tolerance;
    if !converged {
        log::warn!("SVT stopped after {iterations} iterations, relative change {residual:e}");
    }
    let mut completed = x.clone();
    for (c, v) in completed.as_mut_slice().iter_mut().enumerate() {
        if mask[c] {
            *v = observed[c];
        }
    }
    Ok(SvtResult {
        completed,
        low_rank: x,
        nuclear_norm: nuclear,
        iterations,
        converged,
        residual,
    })
}
