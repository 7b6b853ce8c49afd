use crate::data::GridField;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Fills every cell of a 2-D field with the mean of the observed entries in its column
/// (axis-1 slice). Observed cells are replaced too, so the result is a pure baseline.
pub fn column_mean_impute(field: &GridField) -> Result<DenseMatrix> {
    let m = field.as_matrix()?;
    let (rows, cols) = m.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for j in 0..cols {
        let (sum, count) = (0..rows)
            .filter(|&i| field.is_observed(i * cols + j))
            .fold((0.0, 0usize), |(s, c), i| (s + m[(i, j)], c + 1));
        if count == 0 {
            return Err(Error::invalid(format!("column {j} has no observations")));
        }
        let mean = sum / count as f64;
        for i in 0..rows {
            out[(i, j)] = mean;
        }
    }
    Ok(out)
}
