//! Small dense least-squares solver shared by the scaling fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers above this are reported as ill-conditioned.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    pub condition: f64,
}

/// Solves `min |A c - y|` by SVD, where `rows[i]` is row `i` of `A`.
pub fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<LeastSquares> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows != rhs.len() {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: n_rows,
            found: rhs.len(),
        });
    }
    if n_cols == 0 || n_rows < n_cols {
        return Err(Error::FitIllConditioned(format!(
            "{n_rows} equations for {n_cols} unknowns"
        )));
    }
    let a = DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(rhs);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::FitIllConditioned(format!(
            "condition number {condition:e}"
        )));
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::FitIllConditioned(e.to_string()))?;
    let res = &a * &c - &y;
    Ok(LeastSquares {
        coefficients: c.iter().copied().collect(),
        residuals: res.iter().copied().collect(),
        max_abs_residual: res.amax(),
        condition,
    })
}
