//! Quadratic program solvers for portfolio selection and regression.
//!
//! Three routes into the same problem family:
//! - [`solve_equality_qp`]: the saddle-point (KKT) solve for a quadratic cost
//!   under linear equality constraints. Near the critical sample ratio this
//!   solve is *allowed* to return huge weights; no regularization is ever
//!   added. When the covariance restricted to the constraint null space has
//!   zero modes, the factorization reports [`QpError::SingularSystem`] —
//!   detecting that onset is part of the point.
//! - [`solve_min_variance`]: the closed-form minimum-variance weights
//!   `w* = σ⁻¹1 / (1ᵀσ⁻¹1)` via a Cholesky solve, never an explicit inverse.
//! - [`solve_nonneg_qp`]: a primal active-set method for the short-selling
//!   ban `w ≥ 0`. Works for every sample ratio, including the regime where
//!   the empirical covariance is rank deficient and weights spontaneously
//!   pin to zero.
//!
//! [`brute_force_oracle`] enumerates all candidate active sets and exists to
//! keep the active-set solver honest in tests.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{dot, norm_inf, solve_symmetric, symmetric_eigenvalues, Cholesky, LinalgError, Mat};
use crate::moments::{empirical_covariance, empirical_cross_moment, CovarianceMatrix};
use crate::process::SampleMatrix;

/// A weight counts as zero when it does not exceed this threshold after a
/// solve; used both for active-set reporting and zero-weight statistics.
pub const ZERO_WEIGHT_TOL: f64 = 1e-10;

/// Relative tolerance of the numerical rank check on the constraint matrix.
pub const CONSTRAINT_RANK_RTOL: f64 = 1e-10;

/// Active-set iteration cap is this factor times the variable count;
/// exceeding it is an error, never a silent approximate return.
pub const ACTIVE_SET_CAP_FACTOR: usize = 10;

/// Variable-count limit of the enumeration oracle (2^N candidate sets).
pub const BRUTE_FORCE_MAX_VARS: usize = 12;

/// Diagonal shift, relative to `max|2σ|`, applied to a *singular* free-set
/// subproblem inside the nonnegative solvers so the step direction stays
/// well defined on flat faces. Equality solves never use it.
const CURVATURE_SHIFT_RTOL: f64 = 1e-10;

/// Feasibility slack accepted on equality constraints.
const FEASIBILITY_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("KKT system numerically singular (zero modes in the covariance)")]
    SingularSystem,
    #[error("no nonnegative point satisfies the equality constraints")]
    Infeasible,
    #[error("active-set iteration cap of {cap} exceeded")]
    MaxIterations { cap: usize },
    #[error("enumeration oracle limited to {max} variables, got {n}")]
    TooLarge { n: usize, max: usize },
}

/// Quadratic cost `wᵀσw + hᵀw` under `A w = b`; the universal problem
/// container. `K = 0` (no constraints) is the regression case, `K = 1` with
/// an all-ones row the budget-constrained portfolio, `K = 2` adds a target
/// return row.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    sigma: CovarianceMatrix,
    linear: Vec<f64>,
    constraints: Mat,
    rhs: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(
        sigma: CovarianceMatrix,
        linear: Vec<f64>,
        constraints: Mat,
        rhs: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = sigma.n();
        let k = constraints.rows();
        if linear.len() != n {
            return Err(QpError::InvalidProgram(format!(
                "linear term has length {} for {} variables",
                linear.len(),
                n
            )));
        }
        if k > 0 && constraints.cols() != n {
            return Err(QpError::InvalidProgram(format!(
                "constraint matrix is {}x{} for {} variables",
                k,
                constraints.cols(),
                n
            )));
        }
        if rhs.len() != k {
            return Err(QpError::InvalidProgram(format!(
                "constraint right-hand side has length {} for {} constraints",
                rhs.len(),
                k
            )));
        }
        if k >= n {
            return Err(QpError::InvalidProgram(format!(
                "need fewer constraints than variables, got K={k}, N={n}"
            )));
        }
        if k > 0 {
            // rank via the K x K Gram spectrum; K is small here
            let gram = Mat::from_fn(k, k, |i, j| dot(constraints.row(i), constraints.row(j)));
            let ev = symmetric_eigenvalues(&gram);
            let largest = ev.first().copied().unwrap_or(0.0).max(0.0).sqrt();
            let smallest = ev.last().copied().unwrap_or(0.0).max(0.0).sqrt();
            if !(smallest > CONSTRAINT_RANK_RTOL * largest) {
                return Err(QpError::InvalidProgram(format!(
                    "constraint matrix is rank deficient (singular values {smallest:e} vs {largest:e})"
                )));
            }
        }
        Ok(QuadraticProgram {
            sigma,
            linear,
            constraints,
            rhs,
        })
    }

    /// Budget-constrained minimum-variance program: `Σ w_i = 1`, no linear
    /// cost term.
    pub fn budget(sigma: CovarianceMatrix) -> Self {
        let n = sigma.n();
        QuadraticProgram::new(
            sigma,
            vec![0.0; n],
            Mat::from_fn(1, n, |_, _| 1.0),
            vec![1.0],
        )
        .expect("budget program is always well formed")
    }

    pub fn n(&self) -> usize {
        self.sigma.n()
    }

    pub fn k(&self) -> usize {
        self.constraints.rows()
    }

    pub fn sigma(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constraints(&self) -> &Mat {
        &self.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `wᵀσw + hᵀw`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.sigma.quadratic_form(w) + dot(&self.linear, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    SingularSystem,
}

/// Optimal weights plus the equality-constraint multipliers, in the sign
/// convention of the saddle system `[2σ Aᵀ; A 0](w, λ) = (−h, b)`.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub active_set: Vec<usize>,
    pub status: SolveStatus,
}

impl Solution {
    fn optimal(qp: &QuadraticProgram, weights: Vec<f64>, multipliers: Vec<f64>) -> Self {
        let active_set = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w <= ZERO_WEIGHT_TOL)
            .map(|(i, _)| i)
            .collect();
        let objective = qp.objective(&weights);
        Solution {
            weights,
            multipliers,
            objective,
            active_set,
            status: SolveStatus::Optimal,
        }
    }
}

/// KKT diagnostics of a returned solution, for verification.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// max |(2σw + h + Aᵀλ)_i| over variables not in the active set
    pub stationarity: f64,
    /// max |A w − b|
    pub feasibility: f64,
    /// smallest bound multiplier over the active set (+inf when empty)
    pub min_bound_multiplier: f64,
    /// max |μ_i w_i| over the active set
    pub complementarity: f64,
}

pub fn kkt_report(qp: &QuadraticProgram, sol: &Solution) -> KktReport {
    let n = qp.n();
    let mut grad_lag = qp.sigma.mat().matvec(&sol.weights);
    for g in grad_lag.iter_mut() {
        *g *= 2.0;
    }
    for i in 0..n {
        grad_lag[i] += qp.linear[i];
        for c in 0..qp.k() {
            grad_lag[i] += qp.constraints[(c, i)] * sol.multipliers[c];
        }
    }
    let mut active = vec![false; n];
    for &i in &sol.active_set {
        active[i] = true;
    }
    let mut stationarity = 0.0f64;
    let mut min_mu = f64::INFINITY;
    let mut comp = 0.0f64;
    for i in 0..n {
        if active[i] {
            min_mu = min_mu.min(grad_lag[i]);
            comp = comp.max((grad_lag[i] * sol.weights[i]).abs());
        } else {
            stationarity = stationarity.max(grad_lag[i].abs());
        }
    }
    let mut feasibility = 0.0f64;
    for c in 0..qp.k() {
        feasibility = feasibility.max((dot(qp.constraints.row(c), &sol.weights) - qp.rhs[c]).abs());
    }
    KktReport {
        stationarity,
        feasibility,
        min_bound_multiplier: min_mu,
        complementarity: comp,
    }
}

/// Solve the equality-constrained program through its saddle-point system.
/// Zero modes of the covariance on the constraint null space surface as
/// [`QpError::SingularSystem`].
pub fn solve_equality_qp(qp: &QuadraticProgram) -> Result<Solution, QpError> {
    let n = qp.n();
    let k = qp.k();
    let m = n + k;
    let mut kkt = Mat::zeros(m, m);
    for i in 0..n {
        for j in 0..=i {
            kkt[(i, j)] = 2.0 * qp.sigma.mat()[(i, j)];
            kkt[(j, i)] = kkt[(i, j)];
        }
    }
    for c in 0..k {
        for j in 0..n {
            kkt[(n + c, j)] = qp.constraints[(c, j)];
            kkt[(j, n + c)] = qp.constraints[(c, j)];
        }
    }
    let mut rhs = vec![0.0; m];
    for i in 0..n {
        rhs[i] = -qp.linear[i];
    }
    rhs[n..].copy_from_slice(&qp.rhs);

    let x = solve_symmetric(&kkt, &rhs).map_err(|e| match e {
        LinalgError::Singular(_) => QpError::SingularSystem,
        LinalgError::Shape(msg) => QpError::InvalidProgram(msg),
    })?;
    let weights = x[..n].to_vec();
    let multipliers = x[n..].to_vec();
    let mut sol = Solution::optimal(qp, weights, multipliers);
    sol.active_set.clear(); // equality-only solve clamps nothing
    Ok(sol)
}

/// Closed-form global minimum-variance weights, `w_i = Σ_j(σ⁻¹)_ij`
/// normalized to unit budget, computed by a symmetric positive-definite
/// solve of `σ y = 1`.
pub fn solve_min_variance(sigma: &CovarianceMatrix) -> Result<Solution, QpError> {
    let n = sigma.n();
    let chol = Cholesky::factor(sigma.mat()).map_err(|_| QpError::SingularSystem)?;
    let y = chol.solve(&vec![1.0; n]);
    let total: f64 = y.iter().sum();
    if !total.is_finite() || total.abs() < 1e-300 {
        return Err(QpError::SingularSystem);
    }
    let weights: Vec<f64> = y.iter().map(|v| v / total).collect();
    let qp = QuadraticProgram::budget(sigma.clone());
    let mut sol = Solution::optimal(&qp, weights, vec![-2.0 / total]);
    sol.active_set.clear();
    Ok(sol)
}

/// Reduced saddle system on a free-variable set, optionally with a diagonal
/// curvature shift.
fn reduced_kkt(big_h: &Mat, a: &Mat, free: &[usize], shift: f64) -> Mat {
    let f = free.len();
    let k = a.rows();
    let m = f + k;
    let mut kkt = Mat::zeros(m, m);
    for (fi, &i) in free.iter().enumerate() {
        for (fj, &j) in free.iter().enumerate().take(fi + 1) {
            kkt[(fi, fj)] = big_h[(i, j)];
            kkt[(fj, fi)] = big_h[(i, j)];
        }
        kkt[(fi, fi)] += shift;
        for c in 0..k {
            kkt[(f + c, fi)] = a[(c, i)];
            kkt[(fi, f + c)] = a[(c, i)];
        }
    }
    kkt
}

/// Equality solve restricted to a face (used by the oracle): minimizes over
/// the free variables with the others fixed at zero. Falls back to a shifted
/// subproblem when the face is flat.
fn face_solve(
    big_h: &Mat,
    lin: &[f64],
    a: &Mat,
    b: &[f64],
    free: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let f = free.len();
    let k = a.rows();
    let mut rhs = vec![0.0; f + k];
    for (fi, &i) in free.iter().enumerate() {
        rhs[fi] = -lin[i];
    }
    rhs[f..].copy_from_slice(b);
    let shift = CURVATURE_SHIFT_RTOL * big_h.max_abs();
    let x = solve_symmetric(&reduced_kkt(big_h, a, free, 0.0), &rhs)
        .or_else(|_| solve_symmetric(&reduced_kkt(big_h, a, free, shift), &rhs))
        .ok()?;
    Some((x[..f].to_vec(), x[f..].to_vec()))
}

/// One direction subproblem of the active-set method: minimize the quadratic
/// model over steps that keep `A p = 0` and the working set pinned.
fn face_step(
    big_h: &Mat,
    grad: &[f64],
    a: &Mat,
    free: &[usize],
    shift: f64,
) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let f = free.len();
    let k = a.rows();
    let mut rhs = vec![0.0; f + k];
    for (fi, &i) in free.iter().enumerate() {
        rhs[fi] = -grad[i];
    }
    let x = solve_symmetric(&reduced_kkt(big_h, a, free, shift), &rhs)?;
    Ok((x[..f].to_vec(), x[f..].to_vec()))
}

/// Primal active-set loop shared by the nonnegative solver and its phase-1
/// feasibility problem. `w` must satisfy `A w = b`, `w ≥ 0`, with exact
/// zeros wherever `working` is set. Returns the optimum and the equality
/// multipliers. Ties on constraint entry and exit break toward the lowest
/// index so runs are reproducible across platforms.
fn active_set_loop(
    big_h: &Mat,
    lin: &[f64],
    a: &Mat,
    mut w: Vec<f64>,
    mut working: Vec<bool>,
    cap: usize,
) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = w.len();
    let shift = CURVATURE_SHIFT_RTOL * big_h.max_abs();
    let mut objective = 0.5 * big_h.quadratic_form(&w) + dot(lin, &w);

    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cap {
            return Err(QpError::MaxIterations { cap });
        }

        let free: Vec<usize> = (0..n).filter(|&i| !working[i]).collect();
        let mut grad = big_h.matvec(&w);
        for i in 0..n {
            grad[i] += lin[i];
        }

        let step = if free.is_empty() {
            None
        } else {
            match face_step(big_h, &grad, a, &free, 0.0) {
                Ok(s) => Some(s),
                Err(_) => match face_step(big_h, &grad, a, &free, shift) {
                    Ok(s) => Some(s),
                    Err(_) => None,
                },
            }
        };

        let (p, lambda) = match step {
            Some(s) => s,
            None => {
                // Subproblem singular even after the shift: the free columns
                // of A are rank deficient. Grow the face and retry.
                if let Some(i) = (0..n).find(|&i| working[i]) {
                    working[i] = false;
                    continue;
                }
                return Err(QpError::SingularSystem);
            }
        };

        // ratio test against the bounds
        let mut alpha = 1.0f64;
        let mut blocker = None;
        for (fi, &i) in free.iter().enumerate() {
            if p[fi] < 0.0 {
                let ratio = -w[i] / p[fi];
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Some(i);
                }
            }
        }

        let mut trial = w.clone();
        for (fi, &i) in free.iter().enumerate() {
            trial[i] += alpha * p[fi];
        }
        if let Some(i) = blocker {
            trial[i] = 0.0;
        }
        let trial_objective = 0.5 * big_h.quadratic_form(&trial) + dot(lin, &trial);
        let progress = objective - trial_objective;

        if blocker.is_none() && progress <= 1e-13 * (1.0 + objective.abs()) {
            // Stationary on this face; examine the bound multipliers.
            let release_tol = 1e-9 * (1.0 + norm_inf(&grad));
            let mut candidate: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| working[i]) {
                let mut mu = grad[i];
                for c in 0..a.rows() {
                    mu += a[(c, i)] * lambda[c];
                }
                if mu < -release_tol && candidate.map_or(true, |(_, best)| mu < best) {
                    candidate = Some((i, mu));
                }
            }
            match candidate {
                Some((i, _)) => {
                    working[i] = false;
                    continue;
                }
                None => return Ok((w, lambda)),
            }
        }

        w = trial;
        objective = trial_objective;
        if let Some(i) = blocker {
            working[i] = true;
        }
    }
}

/// Feasible starting vertex for the nonnegative solver.
fn nonneg_start(qp: &QuadraticProgram, cap: usize) -> Result<(Vec<f64>, Vec<bool>), QpError> {
    let n = qp.n();
    let k = qp.k();
    match k {
        0 => Ok((vec![0.0; n], vec![true; n])),
        1 => {
            let row = qp.constraints.row(0);
            let target = qp.rhs[0];
            if target == 0.0 {
                return Ok((vec![0.0; n], vec![true; n]));
            }
            // single-variable vertex; feasibility for one equality row is
            // exactly the existence of a coefficient with the right sign
            let mut best: Option<usize> = None;
            for j in 0..n {
                if row[j] != 0.0 && target / row[j] > 0.0 {
                    let better = match best {
                        None => true,
                        Some(b) => qp.sigma.mat()[(j, j)] < qp.sigma.mat()[(b, b)],
                    };
                    if better {
                        best = Some(j);
                    }
                }
            }
            let j = best.ok_or(QpError::Infeasible)?;
            let mut w = vec![0.0; n];
            w[j] = target / row[j];
            let mut working = vec![true; n];
            working[j] = false;
            Ok((w, working))
        }
        _ => {
            // phase-1: minimize |A w − b|² over w ≥ 0 with the same machinery
            let a = &qp.constraints;
            let big_h = Mat::from_fn(n, n, |i, j| {
                2.0 * (0..k).map(|c| a[(c, i)] * a[(c, j)]).sum::<f64>()
            });
            let lin: Vec<f64> = (0..n)
                .map(|i| -2.0 * (0..k).map(|c| a[(c, i)] * qp.rhs[c]).sum::<f64>())
                .collect();
            let empty = Mat::zeros(0, n);
            let (w, _) = active_set_loop(&big_h, &lin, &empty, vec![0.0; n], vec![true; n], cap)?;
            let mut residual = 0.0f64;
            for c in 0..k {
                residual = residual.max((dot(a.row(c), &w) - qp.rhs[c]).abs());
            }
            if residual > FEASIBILITY_RTOL * (1.0 + norm_inf(&qp.rhs)) {
                return Err(QpError::Infeasible);
            }
            let working: Vec<bool> = w.iter().map(|&wi| wi == 0.0).collect();
            Ok((w, working))
        }
    }
}

/// Global minimizer of the convex program with the short-selling ban
/// `w ≥ 0`, by a primal active-set method started from a documented
/// feasible vertex (for a single budget row: `w = e_j` with `j` the smallest
/// diagonal variance, ties to the lowest index).
pub fn solve_nonneg_qp(qp: &QuadraticProgram) -> Result<Solution, QpError> {
    let n = qp.n();
    let cap = ACTIVE_SET_CAP_FACTOR * n;
    let (w, working) = nonneg_start(qp, cap)?;
    let big_h = Mat::from_fn(n, n, |i, j| 2.0 * qp.sigma.mat()[(i, j)]);
    let (w, lambda) = active_set_loop(&big_h, &qp.linear, &qp.constraints, w, working, cap)?;
    debug_assert!(w.iter().all(|&wi| wi >= -ZERO_WEIGHT_TOL));
    Ok(Solution::optimal(qp, w, lambda))
}

/// Exhaustive oracle: enumerate every set of variables clamped to zero,
/// solve the equality-constrained subproblem on the complement, keep the
/// feasible candidates and return the best. Exact for the convex programs
/// used here; tractable only for small N.
pub fn brute_force_oracle(qp: &QuadraticProgram) -> Result<Solution, QpError> {
    let n = qp.n();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(QpError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_VARS,
        });
    }
    let k = qp.k();
    let big_h = Mat::from_fn(n, n, |i, j| 2.0 * qp.sigma.mat()[(i, j)]);
    let feas_tol = FEASIBILITY_RTOL * (1.0 + norm_inf(&qp.rhs));

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let candidate = if free.is_empty() {
            if norm_inf(&qp.rhs) <= feas_tol {
                Some((vec![0.0; n], vec![0.0; k]))
            } else {
                None
            }
        } else {
            face_solve(&big_h, &qp.linear, &qp.constraints, &qp.rhs, &free).and_then(
                |(wf, lambda)| {
                    if wf.iter().any(|&v| v < -ZERO_WEIGHT_TOL) {
                        return None;
                    }
                    let mut w = vec![0.0; n];
                    for (fi, &i) in free.iter().enumerate() {
                        w[i] = wf[fi];
                    }
                    // a shifted fallback can drift off the constraints; keep
                    // only genuinely feasible candidates
                    let feasible = (0..k).all(|c| {
                        (dot(qp.constraints.row(c), &w) - qp.rhs[c]).abs() <= feas_tol
                    });
                    feasible.then_some((w, lambda))
                },
            )
        };
        if let Some((w, lambda)) = candidate {
            let obj = qp.objective(&w);
            if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
                best = Some((obj, w, lambda));
            }
        }
    }

    let (_, w, lambda) = best.ok_or(QpError::Infeasible)?;
    Ok(Solution::optimal(qp, w, lambda))
}

/// Recast least squares `y ≈ Xᵀw` (zero-intercept, zero-mean convention) as
/// an unconstrained quadratic program with the sample second moments:
/// `σ = (1/T) X Xᵀ`, `h = −2 (1/T) X y`. Minimizing `wᵀσw + hᵀw` is the
/// least-squares problem up to the constant `(1/T) Σ y²`.
#[derive(Debug, Clone)]
pub struct RegressionQp {
    pub qp: QuadraticProgram,
    /// Intercept implied by the zero-mean convention.
    pub intercept: f64,
}

pub fn regression_to_qp(sample: &SampleMatrix, target: &[f64]) -> Result<RegressionQp, QpError> {
    let n = sample.n();
    let sigma = empirical_covariance(sample);
    let cross = empirical_cross_moment(sample, target)
        .map_err(|e| QpError::DimensionMismatch(e.to_string()))?;
    let linear: Vec<f64> = cross.iter().map(|c| -2.0 * c).collect();
    let qp = QuadraticProgram::new(sigma, linear, Mat::zeros(0, n), Vec::new())?;
    Ok(RegressionQp { qp, intercept: 0.0 })
}
