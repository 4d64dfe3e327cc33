//! Linear least squares: ordinary and ridge fits with an unpenalized
//! intercept.
//!
//! Two routes are available. [`fit`] factors the centered design with a
//! column-pivoted Householder QR and returns the minimum-norm minimizer on
//! rank-deficient input. [`GramSystem`] accumulates centered normal
//! equations once and solves sub-problems by pivoted Cholesky, which is what
//! the denoiser uses when the design is wide.

mod gram;
mod qr;

pub use gram::{GramSystem, GRAM_BLOCK_ROWS};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per work unit in [`predict`].
const PREDICT_CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularization {
    #[default]
    Ols,
    /// Penalty `λ‖β‖²` on the coefficients (never the intercept).
    Ridge(f64),
}

impl Regularization {
    pub fn lambda(&self) -> f64 {
        match *self {
            Regularization::Ols => 0.0,
            Regularization::Ridge(l) => l,
        }
    }

    pub(crate) fn validated_lambda(&self) -> Result<f64> {
        let l = self.lambda();
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::InvalidInput(format!("ridge lambda must be finite and >= 0, got {l}")));
        }
        Ok(l)
    }
}

/// Row-major `rows × cols` design with an optional implicit all-ones column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    has_intercept: bool,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::mismatch(format!("{rows}x{cols} values"), values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self {
            rows,
            cols,
            values,
            has_intercept: true,
        })
    }

    /// Builds a design from equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(c) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::mismatch(rows, c.len()));
        }
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                values[i * cols + j] = *v;
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn with_intercept(mut self, on: bool) -> Self {
        self.has_intercept = on;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + j]).collect()
    }

    /// Column means, or zeros when the intercept is off.
    fn centering(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.cols];
        if self.has_intercept && self.rows > 0 {
            for i in 0..self.rows {
                for (m, v) in mu.iter_mut().zip(self.row(i)) {
                    *m += v;
                }
            }
            for m in &mut mu {
                *m /= self.rows as f64;
            }
        }
        mu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub regularization: Regularization,
    /// Numerical rank of the (regularized) system that was solved.
    pub rank: usize,
}

impl LinearModel {
    /// Prediction for a single feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        dot(row, &self.coefficients) + self.intercept
    }
}

/// Minimizes `‖Xβ + b·1 − y‖² + λ‖β‖²`.
///
/// Under OLS with a rank-deficient design the minimum-norm `β` is returned.
/// Singular values below `max(rows, cols) · ε · σ_max` are treated as zero.
pub fn fit(x: &DesignMatrix, y: &[f64], reg: Regularization) -> Result<LinearModel> {
    let lambda = reg.validated_lambda()?;
    check_system(x, y)?;
    let (m, d) = (x.rows, x.cols);
    let mu = x.centering();
    let y_mean = if x.has_intercept {
        y.iter().sum::<f64>() / m as f64
    } else {
        0.0
    };

    let aug = if lambda > 0.0 { d } else { 0 };
    let rows = m + aug;
    let mut a = vec![0.0; rows * d];
    for j in 0..d {
        let col = &mut a[j * rows..(j + 1) * rows];
        for i in 0..m {
            col[i] = x.values[i * d + j] - mu[j];
        }
        if aug > 0 {
            col[m + j] = lambda.sqrt();
        }
    }
    let mut rhs: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    rhs.resize(rows, 0.0);

    let (coefficients, rank) = qr::min_norm_lstsq(rows, d, a, &rhs);
    let intercept = if x.has_intercept {
        y_mean - mu.iter().zip(&coefficients).map(|(a, b)| a * b).sum::<f64>()
    } else {
        0.0
    };
    if !intercept.is_finite() || coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solve produced non-finite coefficients".into()));
    }
    Ok(LinearModel {
        coefficients,
        intercept,
        regularization: reg,
        rank,
    })
}

/// Same contract as [`fit`], solved through the normal equations.
pub fn fit_normal_equations(x: &DesignMatrix, y: &[f64], reg: Regularization) -> Result<LinearModel> {
    reg.validated_lambda()?;
    check_system(x, y)?;
    let d = x.cols;
    let gram = GramSystem::accumulate(x.rows, d + 1, x.has_intercept, |r, out| {
        out[..d].copy_from_slice(x.row(r));
        out[d] = y[r];
    });
    let predictors: Vec<usize> = (0..d).collect();
    let mut model = gram.solve(&predictors, d, reg)?;
    if !x.has_intercept {
        model.intercept = 0.0;
    }
    Ok(model)
}

fn check_system(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if x.rows == 0 {
        return Err(Error::InvalidInput("regression needs at least one row".into()));
    }
    if y.len() != x.rows {
        return Err(Error::mismatch(format!("{} targets", x.rows), y.len()));
    }
    if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    Ok(())
}

/// `Xβ + b·1`, evaluated row by row.
pub fn predict(model: &LinearModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.cols != model.coefficients.len() {
        return Err(Error::mismatch(
            format!("{} columns", model.coefficients.len()),
            x.cols,
        ));
    }
    let mut out = vec![0.0; x.rows];
    if x.cols == 0 {
        out.fill(model.intercept);
        return Ok(out);
    }
    out.par_chunks_mut(PREDICT_CHUNK_ROWS)
        .zip(x.values.par_chunks(PREDICT_CHUNK_ROWS * x.cols))
        .for_each(|(o, rows)| {
            for (oi, row) in o.iter_mut().zip(rows.chunks_exact(x.cols)) {
                *oi = model.predict_row(row);
            }
        });
    Ok(out)
}

/// Inner product with four independent accumulators. The summation order
/// depends only on the length, so results are reproducible bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let k = i * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
