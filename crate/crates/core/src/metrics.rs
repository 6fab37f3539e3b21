//! The estimation-error ratio q0 and its analytic benchmarks.
//!
//! q0 is the square root of the ratio between the true risk of the
//! sample-optimized solution and the true risk of the truly optimal one. It
//! equals 1 under perfect information and grows with the dimension-to-sample
//! ratio; the analytic mean for the budget-constrained portfolio is
//! `1/sqrt(1 - N/T)`, diverging at N/T = 1. q0 itself (never its square) is
//! the reported quantity throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::CovarianceMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("denominator risk is not positive; q0 is undefined")]
    DegenerateDenominator,
    #[error("weights violate the unit budget (sum = {0})")]
    BudgetViolation(f64),
    #[error("analytic mean diverges at or beyond N/T = 1 (N={n}, T={t})")]
    CriticalOrSupercritical { n: usize, t: usize },
    #[error("exponent fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("invalid fit point: {0}")]
    InvalidPoint(String),
}

/// q0 for the quadratic risk: `sqrt((w1ᵀ σ0 w1) / (w0ᵀ σ0 w0))`, with both
/// quadratic forms taken under the *true* covariance.
pub fn q0_variance(
    w1: &[f64],
    w0: &[f64],
    sigma0: &CovarianceMatrix,
) -> Result<f64, MetricsError> {
    assert_eq!(w1.len(), sigma0.n(), "w1 length mismatch");
    assert_eq!(w0.len(), sigma0.n(), "w0 length mismatch");
    let denom = sigma0.quadratic_form(w0);
    if !(denom > 0.0) {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok((sigma0.quadratic_form(w1) / denom).sqrt())
}

/// q0 shortcut valid when the true covariance is the identity and the true
/// weights are uniform `1/N`: `sqrt(N Σ w_i²)`. Requires the unit budget.
pub fn q0_iid_shortcut(w1: &[f64]) -> Result<f64, MetricsError> {
    let total: f64 = w1.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(MetricsError::BudgetViolation(total));
    }
    let n = w1.len() as f64;
    Ok((n * w1.iter().map(|w| w * w).sum::<f64>()).sqrt())
}

/// q0 for an arbitrary cost: `sqrt(H(w1) / H(w0))` where `cost` evaluates
/// the objective under the *true* parameters. For regression, `cost` is the
/// population residual second moment including its constant term, so the
/// ratio measures the relative increase in prediction error.
pub fn q0_general(
    cost: impl Fn(&[f64]) -> f64,
    w1: &[f64],
    w0: &[f64],
) -> Result<f64, MetricsError> {
    let denom = cost(w0);
    if !(denom > 0.0) {
        return Err(MetricsError::DegenerateDenominator);
    }
    Ok((cost(w1) / denom).sqrt())
}

/// Exact large-system mean of q0 for the budget-constrained portfolio:
/// `1 / sqrt(1 - N/T)`. Defined only below the critical ratio.
pub fn analytic_q0(n: usize, t: usize) -> Result<f64, MetricsError> {
    if n == 0 || t == 0 || n >= t {
        return Err(MetricsError::CriticalOrSupercritical { n, t });
    }
    Ok(1.0 / (1.0 - n as f64 / t as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `log(value)` against `log(1 - r)` over points
/// `(r, value)` with `r = N/T` below 1. A divergence `value ~ (1-r)^e`
/// returns slope `e`; q0-style data is expected near -1/2.
pub fn fit_critical_exponent(points: &[(f64, f64)]) -> Result<ExponentFit, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(r, value) in points {
        if !(r > 0.0 && r < 1.0) {
            return Err(MetricsError::InvalidPoint(format!(
                "ratio {r} outside (0, 1)"
            )));
        }
        if !(value > 0.0) {
            return Err(MetricsError::InvalidPoint(format!(
                "value {value} not positive"
            )));
        }
        xs.push((1.0 - r).ln());
        ys.push(value.ln());
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(MetricsError::InvalidPoint(
            "all ratios identical; slope undefined".into(),
        ));
    }
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ExponentFit {
        exponent,
        intercept,
        r_squared,
    })
}

/// One Monte Carlo draw's error statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorSample {
    pub q0: f64,
    pub weights: Vec<f64>,
    /// Number of weights at zero (active bound constraints); 0 for
    /// unconstrained solves.
    pub zero_count: usize,
    pub sample_seed: u64,
}

impl ErrorSample {
    /// Cross-sectional standard deviation of the weight vector.
    pub fn weight_std(&self) -> f64 {
        dispersion(&self.weights)
    }
}

pub(crate) fn dispersion(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

/// Fixed-width histogram of q0 draws over `[1, max]` with `ceil(sqrt(n))`
/// bins plus one overflow bin; draws that overflow f64 land in the overflow
/// bin, which keeps near-critical heavy tails visible.
pub fn q0_histogram(values: &[f64]) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let finite_max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max);
    let hi = if finite_max > 1.0 { finite_max } else { 1.0 + 1e-9 };
    let bins = (values.len() as f64).sqrt().ceil() as usize;
    let width = (hi - 1.0) / bins as f64;
    let mut counts = vec![0u64; bins + 1];
    for &v in values {
        if !v.is_finite() || v > hi {
            counts[bins] += 1;
        } else {
            let idx = ((v - 1.0) / width).floor().max(0.0) as usize;
            counts[idx.min(bins - 1)] += 1;
        }
    }
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: 1.0 + i as f64 * width,
            upper: 1.0 + (i + 1) as f64 * width,
            count: counts[i],
        })
        .collect();
    out.push(HistogramBin {
        lower: hi,
        upper: f64::INFINITY,
        count: counts[bins],
    });
    out
}

/// Aggregates of one (N, T) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub t: usize,
    /// dimension-to-sample ratio N/T
    pub r: f64,
    pub q0_mean: f64,
    pub q0_std: f64,
    /// mean over samples of the cross-sectional weight standard deviation
    pub weight_std_mean: f64,
    /// mean over samples of (zero weights)/N
    pub zero_fraction_mean: f64,
    /// successfully solved samples aggregated here
    pub n_samples: usize,
    /// written to its own CSV rather than the JSON summary
    #[serde(skip)]
    pub histogram: Vec<HistogramBin>,
}
