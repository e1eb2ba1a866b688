//! Dense vectors and bounded linear maps between the two coordinate spaces.
//!
//! `LinearMap` caches a certified upper bound on its spectral norm. Landweber
//! steps divide by the square of that bound, so underestimating it would
//! lengthen the step past what the quasi-nonexpansive estimates allow.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Default relative tolerance of the norm estimate.
pub const DEFAULT_NORM_REL_TOL: f64 = 1e-8;
/// Iteration budget of the power method.
pub const MAX_POWER_ITERATIONS: usize = 10_000;

pub fn vector(entries: &[f64]) -> Vector {
    Vector::from_column_slice(entries)
}

pub fn ensure_finite(v: &Vector, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{context} has non-finite entries")))
    }
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::shape(context, expected, found))
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Power iteration from the normalized all-ones vector. If the start lies in
/// the null space the canonical basis vectors are tried in order. When the
/// Rayleigh quotient has not settled within the iteration budget the dense
/// symmetric eigensolver is used instead.
pub fn largest_eigenvalue_psd(b: &Matrix, rel_tol: f64, max_iter: usize) -> f64 {
    let n = b.nrows();
    if n == 0 {
        return 0.0;
    }
    let scale = b.norm();
    if scale == 0.0 {
        return 0.0;
    }

    let ones = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let start = std::iter::once(ones)
        .chain((0..n).map(|j| {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            e
        }))
        .find(|v| (b * v).norm() > 1e-14 * scale);
    let Some(mut v) = start else {
        return 0.0;
    };

    let mut mu = 0.0;
    for _ in 0..max_iter {
        let w = b * &v;
        let next_mu = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        if (next_mu - mu).abs() <= 1e-3 * rel_tol * next_mu.abs() {
            return next_mu.max(mu);
        }
        mu = next_mu;
    }

    log::debug!("power iteration did not settle; using dense symmetric eigensolver");
    let eig = SymmetricEigen::new(b.clone());
    eig.eigenvalues.iter().copied().fold(mu, f64::max)
}

/// Upper bound on the spectral norm of `matrix`, within `(1 + 10 rel_tol)` of
/// the true value.
pub fn norm_upper_bound(matrix: &Matrix, rel_tol: f64) -> Result<f64> {
    if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(Error::Domain(format!(
            "relative tolerance must lie in (0, 1e-2], got {rel_tol}"
        )));
    }
    if matrix.iter().all(|&x| x == 0.0) {
        return Err(Error::Domain(
            "Landweber transform requires nonzero A".to_string(),
        ));
    }
    // Work with the smaller Gram matrix; both share the nonzero spectrum.
    let gram = if matrix.nrows() < matrix.ncols() {
        matrix * matrix.transpose()
    } else {
        matrix.transpose() * matrix
    };
    let lambda = largest_eigenvalue_psd(&gram, rel_tol, MAX_POWER_ITERATIONS);
    Ok(lambda.max(0.0).sqrt() * (1.0 + rel_tol))
}

/// Bounded linear map `A: R^cols -> R^rows` with a cached norm bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    matrix: Matrix,
    norm_ub: f64,
}

impl LinearMap {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Domain(
                "linear map must have positive dimensions".into(),
            ));
        }
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("linear map has non-finite entries".into()));
        }
        let norm_ub = if matrix.iter().all(|&x| x == 0.0) {
            0.0
        } else {
            norm_upper_bound(&matrix, DEFAULT_NORM_REL_TOL)?
        };
        Ok(Self { matrix, norm_ub })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Matrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&vector(diag)))
    }

    /// Row-major nested rows, as they appear in inline JSON.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::Domain(format!(
                "row {bad} has {} entries, expected {ncols}",
                rows[bad].len()
            )));
        }
        Self::new(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Header-free, row-major CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Domain(format!("bad matrix entry {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Cached upper bound on `‖A‖`; zero only for the zero map.
    pub fn norm_ub(&self) -> f64 {
        self.norm_ub
    }

    pub fn is_zero(&self) -> bool {
        self.norm_ub == 0.0
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("LinearMap::apply", self.cols(), x.len())?;
        Ok(&self.matrix * x)
    }

    pub fn adjoint_apply(&self, y: &Vector) -> Result<Vector> {
        ensure_dim("LinearMap::adjoint_apply", self.rows(), y.len())?;
        Ok(self.matrix.tr_mul(y))
    }

    /// Diagonal entries when the map is square and diagonal.
    pub fn diagonal(&self) -> Option<Vec<f64>> {
        if !self.matrix.is_square() {
            return None;
        }
        let off_diagonal_zero = self
            .matrix
            .iter()
            .enumerate()
            .all(|(idx, &x)| idx % self.rows() == idx / self.rows() || x == 0.0);
        off_diagonal_zero.then(|| self.matrix.diagonal().iter().copied().collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}
