//! Uncentered second-moment estimators.
//!
//! The covariance estimator here deliberately does NOT subtract sample means:
//! it is the raw time average `(1/T) Σ_t x_it x_jt`. The generators in
//! [`crate::process`] produce zero-mean data, so the estimator is unbiased as
//! used. A mean-subtracting variant is out of scope.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{compensated_dot, dot, symmetric_eigenvalues, Mat};
use crate::process::SampleMatrix;

/// Relative tolerance for the symmetry check on covariance inputs.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Relative eigenvalue tolerance below which a covariance is still accepted
/// as positive semidefinite (numerical zero).
pub const PSD_RTOL: f64 = 1e-10;

/// Series length from which the estimator switches to compensated
/// accumulation so the last digits survive very long sums.
const COMPENSATED_MIN_T: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric within relative tolerance {SYMMETRY_RTOL:e}")]
    Asymmetric,
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Symmetric N x N second-moment matrix. Symmetrized exactly on construction;
/// inputs may deviate from symmetry by at most [`SYMMETRY_RTOL`] relative to
/// the largest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    mat: Mat,
}

impl CovarianceMatrix {
    pub fn new(mat: Mat) -> Result<Self, MomentError> {
        let n = mat.rows();
        if mat.cols() != n {
            return Err(MomentError::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        if !mat.is_finite() {
            return Err(MomentError::NonFinite);
        }
        let scale = mat.max_abs();
        let mut sym = mat;
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (sym[(i, j)], sym[(j, i)]);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(MomentError::Asymmetric);
                }
                let m = 0.5 * (a + b);
                sym[(i, j)] = m;
                sym[(j, i)] = m;
            }
        }
        Ok(CovarianceMatrix { mat: sym })
    }

    pub fn identity(n: usize) -> Self {
        CovarianceMatrix {
            mat: Mat::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        self.mat.quadratic_form(w)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.max_abs()
    }

    /// Eigenvalue check: all eigenvalues at least `-PSD_RTOL * max|σ|`.
    pub fn is_positive_semidefinite(&self) -> bool {
        let ev = symmetric_eigenvalues(&self.mat);
        let floor = -PSD_RTOL * self.max_abs();
        ev.iter().all(|&e| e >= floor)
    }

    /// Same matrix scaled by `c`; test helper for scale-equivariance checks.
    pub fn scaled(&self, c: f64) -> Self {
        let n = self.n();
        CovarianceMatrix {
            mat: Mat::from_fn(n, n, |i, j| c * self.mat[(i, j)]),
        }
    }
}

/// Time average of outer products, `σ_ij = (1/T) Σ_t x_it x_jt`, with no mean
/// subtraction. Symmetric and positive semidefinite by construction.
pub fn empirical_covariance(sample: &SampleMatrix) -> CovarianceMatrix {
    let n = sample.n();
    let t = sample.t();
    let inv_t = 1.0 / t as f64;
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        let xi = sample.asset(i);
        for j in 0..=i {
            let xj = sample.asset(j);
            let s = if t >= COMPENSATED_MIN_T {
                compensated_dot(xi, xj)
            } else {
                dot(xi, xj)
            };
            let v = s * inv_t;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    CovarianceMatrix { mat: m }
}

/// Uncentered cross moment `h_i = (1/T) Σ_t x_it y_t`, same convention as the
/// covariance estimator.
pub fn empirical_cross_moment(
    sample: &SampleMatrix,
    target: &[f64],
) -> Result<Vec<f64>, MomentError> {
    let t = sample.t();
    if target.len() != t {
        return Err(MomentError::DimensionMismatch(format!(
            "target has length {} but the sample has {} observations",
            target.len(),
            t
        )));
    }
    let inv_t = 1.0 / t as f64;
    let h = (0..sample.n())
        .map(|i| {
            let xi = sample.asset(i);
            let s = if t >= COMPENSATED_MIN_T {
                compensated_dot(xi, target)
            } else {
                dot(xi, target)
            };
            s * inv_t
        })
        .collect();
    Ok(h)
}

/// Count of eigenvalues above `tol` times the largest eigenvalue.
pub fn numerical_rank(cov: &CovarianceMatrix, tol: f64) -> usize {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let ev = symmetric_eigenvalues(cov.mat());
    let largest = ev.first().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&e| e > tol * largest).count()
}

/// Spectral summary used when reporting degenerate regimes.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub largest: f64,
    pub smallest: f64,
    pub rank: usize,
}

impl SpectrumSummary {
    pub fn of(cov: &CovarianceMatrix, tol: f64) -> Self {
        let ev = symmetric_eigenvalues(cov.mat());
        SpectrumSummary {
            largest: ev.first().copied().unwrap_or(0.0),
            smallest: ev.last().copied().unwrap_or(0.0),
            rank: numerical_rank(cov, tol),
        }
    }
}
