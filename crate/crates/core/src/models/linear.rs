//! Ordinary least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares coefficients for a row-major `rows x cols` design.
///
/// Fails with [`Error::SingularDesign`] when the design does not have full
/// column rank (checked on the diagonal of the QR factor).
pub fn least_squares(design: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    if design.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            got: design.len(),
        });
    }
    if y.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: y.len(),
        });
    }
    if rows < cols || cols == 0 {
        return Err(Error::SingularDesign);
    }
    let x = DMatrix::from_row_slice(rows, cols, design);
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = x.qr();
    let r = qr.r();
    let rank_tol = 1e-10 * scale.max(1.0);
    if (0..cols).any(|j| r[(j, j)].abs() <= rank_tol) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)?;
    Ok(beta.iter().copied().collect())
}

/// Linear predictor with intercept over a subset of covariate columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearFit {
    columns: Vec<usize>,
    intercept: f64,
    coefficients: Vec<f64>,
}

impl LinearFit {
    /// Regresses `y` on `[1, z[columns]]` over the rows yielded by `rows`.
    pub fn fit<'a>(
        rows: impl ExactSizeIterator<Item = &'a [f64]>,
        columns: &[usize],
        y: &[f64],
    ) -> Result<Self> {
        let n = rows.len();
        let p = columns.len() + 1;
        let mut design = Vec::with_capacity(n * p);
        for z in rows {
            design.push(1.0);
            design.extend(columns.iter().map(|&c| z[c]));
        }
        let beta = least_squares(&design, n, p, y)?;
        Ok(Self {
            columns: columns.to_vec(),
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        self.intercept
            + self
                .columns
                .iter()
                .zip(&self.coefficients)
                .map(|(&c, b)| b * z[c])
                .sum::<f64>()
    }
}
