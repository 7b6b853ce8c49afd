use serde::{Deserialize, Serialize};

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, svd, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfConfig {
    pub rank: usize,
    /// Ridge weight λ on ‖U‖² + ‖V‖².
    pub ridge: f64,
    pub max_iterations: usize,
    /// Stop once the relative objective change of a full sweep falls below this.
    pub tolerance: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            ridge: 1e-3,
            max_iterations: 500,
            tolerance: 1e-9,
        }
    }
}

/// Outcome of [`mf_als`].
#[derive(Debug, Clone, PartialEq)]
pub struct MfResult {
    /// `U Vᵀ`.
    pub completed: DenseMatrix,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Final relative objective change.
    pub residual: f64,
    /// Objective after initialization and after every half-step.
    pub objective_trace: Vec<f64>,
}

impl MfResult {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                what: "alternating least squares",
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

struct Observed {
    rows: usize,
    cols: usize,
    /// Per row: (column, value).
    by_row: Vec<Vec<(usize, f64)>>,
    /// Per column: (row, value).
    by_col: Vec<Vec<(usize, f64)>>,
}

fn observed_entries(field: &GridField) -> Result<Observed> {
    if field.arity() != 2 || field.channels() != 1 {
        return Err(Error::dims(
            "matrix completion needs a single-channel 2-axis field",
        ));
    }
    let (rows, cols) = (field.dims()[0], field.dims()[1]);
    let mut by_row = vec![Vec::new(); rows];
    let mut by_col = vec![Vec::new(); cols];
    for cell in (0..field.cells()).filter(|&c| field.is_observed(c)) {
        let (i, j) = (cell / cols, cell % cols);
        let v = field.cell_values(cell)[0];
        by_row[i].push((j, v));
        by_col[j].push((i, v));
    }
    Ok(Observed {
        rows,
        cols,
        by_row,
        by_col,
    })
}

/// `Σ_obs (x_ij − u_i·v_j)² + λ(‖U‖² + ‖V‖²)`.
fn objective(obs: &Observed, u: &DenseMatrix, v: &DenseMatrix, ridge: f64) -> f64 {
    let mut f = 0.0;
    for (i, row) in obs.by_row.iter().enumerate() {
        for &(j, x) in row {
            let p: f64 = u.row(i).iter().zip(v.row(j)).map(|(a, b)| a * b).sum();
            f += (x - p) * (x - p);
        }
    }
    let sq = |m: &DenseMatrix| m.as_slice().iter().map(|x| x * x).sum::<f64>();
    f + ridge * (sq(u) + sq(v))
}

/// Exact ridge solve of every row of `target` given the fixed factor.
fn half_step(
    entries: &[Vec<(usize, f64)>],
    fixed: &DenseMatrix,
    target: &mut DenseMatrix,
    ridge: f64,
) -> Result<()> {
    let r = fixed.cols();
    for (i, list) in entries.iter().enumerate() {
        let mut gram = DenseMatrix::zeros(r, r);
        let mut rhs = vec![0.0; r];
        for &(j, x) in list {
            let f = fixed.row(j);
            for a in 0..r {
                rhs[a] += x * f[a];
                for b in 0..r {
                    gram[(a, b)] += f[a] * f[b];
                }
            }
        }
        for a in 0..r {
            gram[(a, a)] += ridge;
        }
        target
            .row_mut(i)
            .copy_from_slice(&cholesky_solve(&gram, &rhs)?);
    }
    Ok(())
}

/// Rank-`r` completion by alternating ridge least squares over the observed cells.
///
/// Factors start from the truncated SVD of the zero-filled matrix rescaled by the inverse
/// observation rate, split as `U√Σ`, `V√Σ`.
pub fn mf_als(field: &GridField, cfg: &MfConfig) -> Result<MfResult> {
    if cfg.rank == 0 || !(cfg.tolerance > 0.0) || !(cfg.ridge > 0.0) {
        return Err(Error::invalid(
            "rank ≥ 1, ridge > 0 and tolerance > 0 are required",
        ));
    }
    let obs = observed_entries(field)?;
    if let Some(i) = obs.by_row.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("row {i} has no observations")));
    }
    if let Some(j) = obs.by_col.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("column {j} has no observations")));
    }
    let r = cfg.rank.min(obs.rows).min(obs.cols);
    let count: usize = obs.by_row.iter().map(Vec::len).sum();
    let scale = (obs.rows * obs.cols) as f64 / count as f64;
    let mut filled = DenseMatrix::zeros(obs.rows, obs.cols);
    for (i, row) in obs.by_row.iter().enumerate() {
        for &(j, x) in row {
            filled[(i, j)] = scale * x;
        }
    }
    let s = svd(&filled)?;
    let mut u = DenseMatrix::zeros(obs.rows, cfg.rank);
    let mut v = DenseMatrix::zeros(obs.cols, cfg.rank);
    for k in 0..r {
        let w = s.singular_values[k].sqrt();
        for i in 0..obs.rows {
            u[(i, k)] = s.u[(i, k)] * w;
        }
        for j in 0..obs.cols {
            v[(j, k)] = s.v[(j, k)] * w;
        }
    }

    let mut trace = vec![objective(&obs, &u, &v, cfg.ridge)];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let before = *trace.last().expect("non-empty");
        half_step(&obs.by_row, &v, &mut u, cfg.ridge)?;
        trace.push(objective(&obs, &u, &v, cfg.ridge));
        half_step(&obs.by_col, &u, &mut v, cfg.ridge)?;
        let after = objective(&obs, &u, &v, cfg.ridge);
        trace.push(after);
        residual = (before - after).abs() / before.max(f64::MIN_POSITIVE);
        if residual < cfg.tolerance {
            break;
        }
    }
    let converged = residual < cfg.tolerance;
    if !converged {
        log::warn!("ALS stopped after {iterations} sweeps, relative change {residual:e}");
    }
    Ok(MfResult {
        completed: u.matmul(&v.transpose())?,
        u,
        v,
        iterations,
        converged,
        residual,
        objective_trace: trace,
    })
}
