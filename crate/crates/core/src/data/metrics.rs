use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::field::GridField;
use crate::error::{Error, Result};

/// Reconstruction error summary. `wmape` is a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wmape: f64,
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "WMAPE {:.2}%  RMSE {:.4}  MAE {:.4}  (n = {})",
            self.wmape, self.rmse, self.mae, self.count
        )
    }
}

/// Metrics over paired values: WMAPE = 100·Σ|y − ŷ| / Σ|y|.
pub fn metrics_from_pairs(pred: &[f64], truth: &[f64]) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::dims("predictions and truth differ in length"));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no cells to evaluate"));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut denom = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        abs += d.abs();
        sq += d * d;
        denom += t.abs();
    }
    if denom == 0.0 {
        return Err(Error::invalid("WMAPE undefined: truth is identically zero"));
    }
    let n = pred.len() as f64;
    Ok(MetricsReport {
        wmape: 100.0 * abs / denom,
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        count: pred.len(),
    })
}

/// Metrics over the cells where `eval_mask` is true (all channels).
pub fn metrics(pred: &GridField, truth: &GridField, eval_mask: &[bool]) -> Result<MetricsReport> {
    if pred.dims() != truth.dims() || pred.channels() != truth.channels() {
        return Err(Error::dims("prediction and truth shapes differ"));
    }
    if eval_mask.len() != truth.cells() {
        return Err(Error::dims("evaluation mask does not match the grid"));
    }
    let mut p = Vec::new();
    let mut t = Vec::new();
    for cell in (0..truth.cells()).filter(|&c| eval_mask[c]) {
        p.extend_from_slice(pred.cell_values(cell));
        t.extend_from_slice(truth.cell_values(cell));
    }
    metrics_from_pairs(&p, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseTensor;
    use crate::rng::SplitMix64;

    #[test]
    fn hand_arithmetic() {
        let r = metrics_from_pairs(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.wmape, r.rmse, r.mae, r.count), (50.0, 1.0, 1.0, 2));
        let r = metrics_from_pairs(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.wmape, r.rmse, r.mae), (0.0, 0.0, 0.0));
        assert_eq!(
            format!("{}", metrics_from_pairs(&[1.1], &[1.0]).unwrap())
                .split_whitespace()
                .nth(1),
            Some("10.00%")
        );
    }

    #[test]
    fn errors() {
        assert!(metrics_from_pairs(&[], &[]).is_err());
        assert!(metrics_from_pairs(&[1.0], &[0.0]).is_err());
        let f =
            GridField::from_tensor(DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap()).unwrap();
        assert!(metrics(&f, &f, &[false; 4]).is_err());
    }

    #[test]
    fn grid_loop_oracle_and_permutation_invariance() {
        let mut rng = SplitMix64::new(7);
        let t: Vec<f64> = (0..60).map(|_| rng.uniform(1.0, 5.0)).collect();
        let p: Vec<f64> = (0..60).map(|_| rng.uniform(1.0, 5.0)).collect();
        let mask: Vec<bool> = (0..60).map(|_| rng.next_f64() < 0.5).collect();
        let truth =
            GridField::from_tensor(DenseTensor::new(vec![6, 10], t.clone()).unwrap()).unwrap();
        let pred =
            GridField::from_tensor(DenseTensor::new(vec![6, 10], p.clone()).unwrap()).unwrap();
        let r = metrics(&pred, &truth, &mask).unwrap();
        let (mut a, mut s, mut d, mut n) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..60 {
            if mask[i] {
                a += (p[i] - t[i]).abs();
                s += (p[i] - t[i]).powi(2);
                d += t[i].abs();
                n += 1.0;
            }
        }
        assert!((r.wmape - 100.0 * a / d).abs() <= 1e-12);
        assert!((r.rmse - (s / n).sqrt()).abs() <= 1e-12);
        assert!((r.mae - a / n).abs() <= 1e-12);

        let perm = rng.permutation(60);
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let full = metrics_from_pairs(&p, &t).unwrap();
        let shuffled = metrics_from_pairs(&pp, &tp).unwrap();
        assert!((full.wmape - shuffled.wmape).abs() <= 1e-12);
        assert!((full.rmse - shuffled.rmse).abs() <= 1e-12);
    }
}
