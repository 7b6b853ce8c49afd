use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::model::factorized::{contract_core, dedupe, FactorizedInr};
use crate::train::loss::mse_loss;

/// One gradient array per model parameter array, in [`FactorizedInr::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub arrays: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &FactorizedInr) -> Self {
        Self {
            arrays: model
                .parameters()
                .iter()
                .map(|(_, a)| vec![0.0; a.len()])
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays
            .iter()
            .flatten()
            .fold(0.0, |a, g| a.max(g.abs()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.arrays.iter().flatten().copied().collect()
    }
}

/// Loss and exact gradients of the MSE over a batch.
///
/// `coords` is row-major `batch × arity`, `targets` is `batch × channels`. Each axis network
/// runs once per distinct coordinate value in the batch.
pub fn backward(
    model: &FactorizedInr,
    coords: &[f64],
    targets: &[f64],
) -> Result<(f64, GradientSet)> {
    let c = model.arity();
    let ch = model.out_channels();
    if coords.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if coords.len() % c != 0 || targets.len() != coords.len() / c * ch {
        return Err(Error::dims("batch coordinates and targets do not agree"));
    }
    let b = coords.len() / c;

    let mut factors = Vec::with_capacity(c);
    let mut traces = Vec::with_capacity(c);
    let mut index = Vec::with_capacity(c);
    for k in 0..c {
        let column: Vec<f64> = (0..b).map(|s| coords[s * c + k]).collect();
        let (unique, idx) = dedupe(&column);
        let (out, trace) = model.eval_axis_traced(k, &unique)?;
        factors.push(out);
        traces.push(trace);
        index.push(idx);
    }
    let dims: Vec<usize> = model.axes().iter().map(|a| a.net.out_dim()).collect();
    let core = model.core().as_slice();
    let mut factor_grads: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.len()]).collect();
    let mut core_grad = vec![0.0; core.len()];
    let scale = 2.0 / b as f64;

    let loss = if c == 2 && ch == 1 {
        // P = U M, ŷ_s = P[i_s]·V[j_s].
        let (d0, d1) = (dims[0], dims[1]);
        let (u, v) = (&factors[0], &factors[1]);
        let nu = u.len() / d0;
        let mut p = vec![0.0; nu * d1];
        gemm_nn(u, core, &mut p, nu, d0, d1);
        let preds: Vec<f64> = (0..b)
            .map(|s| {
                let (i, j) = (index[0][s], index[1][s]);
                p[i * d1..(i + 1) * d1]
                    .iter()
                    .zip(&v[j * d1..(j + 1) * d1])
                    .map(|(x, y)| x * y)
                    .sum()
            })
            .collect();
        let loss = mse_loss(&preds, targets, 1)?;
        let mut gp = vec![0.0; p.len()];
        let gv = &mut factor_grads[1];
        for s in 0..b {
            let g = scale * (preds[s] - targets[s]);
            let (i, j) = (index[0][s], index[1][s]);
            for t in 0..d1 {
                gp[i * d1 + t] += g * v[j * d1 + t];
                gv[j * d1 + t] += g * p[i * d1 + t];
            }
        }
        gemm_tn(u, &gp, &mut core_grad, nu, d0, d1);
        gemm_nt(&gp, core, &mut factor_grads[0], nu, d1, d0);
        loss
    } else {
        let mut preds = Vec::with_capacity(b * ch);
        for s in 0..b {
            let refs: Vec<&[f64]> = (0..c)
                .map(|k| &factors[k][index[k][s] * dims[k]..(index[k][s] + 1) * dims[k]])
                .collect();
            preds.extend(contract_core(model.core(), &refs, ch));
        }
        let loss = mse_loss(&preds, targets, ch)?;
        let mut midx = vec![0usize; c];
        let mut prefix = vec![1.0; c + 1];
        let mut suffix = vec![1.0; c + 1];
        for s in 0..b {
            let g: Vec<f64> = (0..ch)
                .map(|o| scale * (preds[s * ch + o] - targets[s * ch + o]))
                .collect();
            let rows: Vec<usize> = (0..c).map(|k| index[k][s]).collect();
            midx.iter_mut().for_each(|x| *x = 0);
            for cell in 0..core.len() / ch {
                let fval = |k: usize, i: usize| factors[k][rows[k] * dims[k] + i];
                for k in 0..c {
                    prefix[k + 1] = prefix[k] * fval(k, midx[k]);
                }
                for k in (0..c).rev() {
                    suffix[k] = suffix[k + 1] * fval(k, midx[k]);
                }
                // Σ_o g_o core[cell, o]
                let mut gc = 0.0;
                for o in 0..ch {
                    core_grad[cell * ch + o] += g[o] * prefix[c];
                    gc += g[o] * core[cell * ch + o];
                }
                if gc != 0.0 {
                    for k in 0..c {
                        factor_grads[k][rows[k] * dims[k] + midx[k]] +=
                            gc * prefix[k] * suffix[k + 1];
                    }
                }
                // Advance the multi-index over the leading modes.
                for k in (0..c).rev() {
                    midx[k] += 1;
                    if midx[k] < dims[k] {
                        break;
                    }
                    midx[k] = 0;
                }
            }
        }
        loss
    };

    let mut arrays = Vec::new();
    for (k, axis) in model.axes().iter().enumerate() {
        arrays.extend(axis.net.backward(&traces[k], &factor_grads[k]));
    }
    arrays.push(core_grad);
    if arrays.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((loss, GradientSet { arrays }))
}

/// Forward-only batch loss (same summation as [`backward`]'s reported loss up to rounding).
pub fn batch_loss(model: &FactorizedInr, coords: &[f64], targets: &[f64]) -> Result<f64> {
    let preds = model.predict(coords)?;
    mse_loss(&preds, targets, model.out_channels())
}
