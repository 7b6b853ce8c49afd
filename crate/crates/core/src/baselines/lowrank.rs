use std::fmt::Write as _;

use crate::error::Result;
use crate::linalg::{effective_rank_of_spectrum, svd, DenseMatrix};

/// Spectral summary of one prediction snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPoint {
    pub step: usize,
    pub nuclear_norm: f64,
    /// `None` when undefined (an all-zero prediction).
    pub effective_rank: Option<f64>,
}

pub fn lowrank_point(step: usize, prediction: &DenseMatrix) -> Result<LowRankPoint> {
    let s = svd(prediction)?;
    Ok(LowRankPoint {
        step,
        nuclear_norm: s.singular_values.iter().sum(),
        effective_rank: effective_rank_of_spectrum(&s.singular_values).ok(),
    })
}

/// Nuclear norm and effective rank of each `(step, prediction)` snapshot.
pub fn lowrank_track(snapshots: &[(usize, DenseMatrix)]) -> Result<Vec<LowRankPoint>> {
    snapshots
        .iter()
        .map(|(s, m)| lowrank_point(*s, m))
        .collect()
}

/// CSV `step,nuclear_norm,effective_rank`; undefined ranks are left empty.
pub fn lowrank_csv(points: &[LowRankPoint]) -> String {
    let mut s = String::from("step,nuclear_norm,effective_rank\n");
    for p in points {
        let er = p
            .effective_rank
            .map_or(String::new(), |r| format!("{r:.16e}"));
        let _ = writeln!(s, "{},{:.16e},{er}", p.step, p.nuclear_norm);
    }
    s
}
