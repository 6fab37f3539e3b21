//! Monte Carlo sweeps over (N, T) grids, reproducible under any degree of
//! parallelism.
//!
//! One sample = draw a fresh series from the process, estimate the second
//! moments, optimize under the estimated problem, and score the result
//! against the *true* covariance and the *true* optimum. Every sample's RNG
//! seed is derived from `(master_seed, point_index, sample_index)` through a
//! fixed avalanche mixer ([`sample_seed`]), so scheduling and worker count
//! are irrelevant to the results. Fresh independent samples are drawn per
//! Monte Carlo iteration (each GARCH draw carries its own burn-in) rather
//! than cutting overlapping segments from one long series.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::metrics::{
    q0_general, q0_histogram, q0_iid_shortcut, q0_variance, ErrorSample, SweepPoint,
};
use crate::moments::{empirical_covariance, CovarianceMatrix};
use crate::process::{generate_sample, ProcessSpec};
use crate::qp::{
    regression_to_qp, solve_equality_qp, solve_min_variance, solve_nonneg_qp, QpError,
    QuadraticProgram, ZERO_WEIGHT_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("setup failure: {0}")]
    Setup(String),
}

/// Which estimated problem each sample solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Budget-constrained minimum variance, unconstrained weights.
    MinVariance,
    /// Same problem under the short-selling ban `w >= 0`.
    MinVarianceNoShort,
    /// Budget plus a target-return constraint (K = 2).
    MeanVariance,
    /// Least squares on simulated regressors (K = 0).
    Regression,
}

/// Process family with parameters that broadcast to any grid dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProcessTemplate {
    IidGaussian,
    FactorGaussian { loading: f64, idio_variance: f64 },
    StudentT { tail_index: f64 },
    CccGarch {
        omega: f64,
        arch: f64,
        garch: f64,
        correlation: f64,
    },
}

impl ProcessTemplate {
    pub fn instantiate(&self, n: usize) -> ProcessSpec {
        match *self {
            ProcessTemplate::IidGaussian => ProcessSpec::IidGaussian { dim: n },
            ProcessTemplate::FactorGaussian {
                loading,
                idio_variance,
            } => ProcessSpec::FactorGaussian {
                loadings: vec![loading; n],
                idio_variances: vec![idio_variance; n],
            },
            ProcessTemplate::StudentT { tail_index } => ProcessSpec::StudentT {
                tail_index,
                scale: Mat::identity(n),
            },
            ProcessTemplate::CccGarch {
                omega,
                arch,
                garch,
                correlation,
            } => ProcessSpec::CccGarch {
                omega: vec![omega; n],
                arch: vec![arch; n],
                garch: vec![garch; n],
                correlation: Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { correlation }),
            },
        }
    }
}

/// True regression coefficients: one value broadcast to every regressor, or
/// an explicit vector (which then pins the grid dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Uniform(f64),
    Explicit(Vec<f64>),
}

impl CoefficientSpec {
    fn materialize(&self, n: usize) -> Vec<f64> {
        match self {
            CoefficientSpec::Uniform(c) => vec![*c; n],
            CoefficientSpec::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSettings {
    pub coefficients: CoefficientSpec,
    /// Variance of the additive observation noise; must be positive, since
    /// the noise-free prediction error has no meaningful q0 denominator.
    pub noise_variance: f64,
}

/// Expected returns are a linear ramp from `return_low` to `return_high`
/// across assets; the target-return constraint uses `target_return`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanVarianceSettings {
    pub return_low: f64,
    pub return_high: f64,
    pub target_return: f64,
}

impl MeanVarianceSettings {
    fn expected_returns(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| {
                self.return_low
                    + (self.return_high - self.return_low) * j as f64 / (n - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub process: ProcessTemplate,
    pub mode: Mode,
    /// (N, T) pairs.
    pub grid: Vec<(usize, usize)>,
    pub n_samples: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_variance: Option<MeanVarianceSettings>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.grid.is_empty() {
            return fail("grid must not be empty".into());
        }
        if self.n_samples < 1 {
            return fail("need at least one sample per grid point".into());
        }
        for &(n, t) in &self.grid {
            if n < 2 {
                return fail(format!("grid dimension N={n} must be at least 2"));
            }
            if t < 1 {
                return fail(format!("grid sample length T={t} must be at least 1"));
            }
            // equality-constrained solves need a nonsingular estimate, so the
            // sub-critical regime T > N is required; the short-selling ban
            // admits any T
            if self.mode != Mode::MinVarianceNoShort && t <= n {
                return fail(format!(
                    "mode {:?} requires T > N at every grid point, got N={n}, T={t}",
                    self.mode
                ));
            }
            self.process
                .instantiate(n)
                .validate()
                .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        }
        match self.mode {
            Mode::Regression => {
                let settings = self
                    .regression
                    .as_ref()
                    .ok_or_else(|| ExperimentError::InvalidSpec(
                        "regression mode needs [regression] settings".into(),
                    ))?;
                if !(settings.noise_variance > 0.0) {
                    return fail("regression noise variance must be positive".into());
                }
                if let CoefficientSpec::Explicit(v) = &settings.coefficients {
                    for &(n, _) in &self.grid {
                        if v.len() != n {
                            return fail(format!(
                                "explicit coefficient vector has length {} but the grid uses N={n}",
                                v.len()
                            ));
                        }
                    }
                }
                if self.mean_variance.is_some() {
                    return fail("mean_variance settings are not used in regression mode".into());
                }
            }
            Mode::MeanVariance => {
                let settings = self
                    .mean_variance
                    .as_ref()
                    .ok_or_else(|| ExperimentError::InvalidSpec(
                        "mean_variance mode needs [mean_variance] settings".into(),
                    ))?;
                if !(settings.return_high > settings.return_low) {
                    return fail("expected-return ramp must have return_high > return_low".into());
                }
                if !settings.target_return.is_finite() {
                    return fail("target return must be finite".into());
                }
                if self.regression.is_some() {
                    return fail("regression settings are not used in mean_variance mode".into());
                }
            }
            Mode::MinVariance | Mode::MinVarianceNoShort => {
                if self.regression.is_some() || self.mean_variance.is_some() {
                    return fail(format!(
                        "mode {:?} takes neither regression nor mean_variance settings",
                        self.mode
                    ));
                }
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer: the avalanche stage mixing every seed derivation.
fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-sample seed:
/// `mix64(mix64(mix64(master) ^ point_index) ^ sample_index)`.
pub fn sample_seed(master_seed: u64, point_index: usize, sample_index: usize) -> u64 {
    mix64(mix64(mix64(master_seed) ^ point_index as u64) ^ sample_index as u64)
}

/// Independent sub-stream of a sample seed (regressors vs. observation
/// noise in regression mode).
fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ stream)
}

const REGRESSOR_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    SingularSystem,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_index: usize,
    pub seed: u64,
    pub kind: FailureKind,
}

/// Result of one Monte Carlo draw: either the error statistics or a failure
/// record. Failures never abort a sweep.
#[derive(Debug, Clone)]
pub enum SampleOutcome {
    Solved(ErrorSample),
    Failed(FailureRecord),
}

fn failure_kind(err: &QpError) -> FailureKind {
    match err {
        QpError::SingularSystem => FailureKind::SingularSystem,
        QpError::Infeasible => FailureKind::Infeasible,
        QpError::MaxIterations { .. } => FailureKind::MaxIterations,
        other => unreachable!("unexpected solver error in a validated sweep: {other}"),
    }
}

enum ModeData {
    Portfolio {
        constraints: Mat,
        rhs: Vec<f64>,
        no_short: bool,
    },
    Regression {
        noise_sd: f64,
        noise_variance: f64,
    },
}

/// Per-grid-point invariants: the process, the true covariance and the true
/// optimum, computed once and shared by all samples of the point.
struct PointContext {
    n: usize,
    t: usize,
    process: ProcessSpec,
    sigma0: CovarianceMatrix,
    true_weights: Vec<f64>,
    iid_identity: bool,
    data: ModeData,
}

impl PointContext {
    fn build(spec: &ExperimentSpec, point_index: usize) -> Result<Self, ExperimentError> {
        let (n, t) = *spec
            .grid
            .get(point_index)
            .ok_or_else(|| ExperimentError::InvalidSpec(format!(
                "point index {point_index} outside the grid"
            )))?;
        let process = spec.process.instantiate(n);
        let sigma0 = process
            .true_covariance()
            .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        let setup = |e: QpError| ExperimentError::Setup(format!(
            "true optimum of point {point_index} failed: {e}"
        ));

        let (true_weights, data) = match spec.mode {
            Mode::MinVariance => {
                let w0 = solve_min_variance(&sigma0).map_err(setup)?.weights;
                (
                    w0,
                    ModeData::Portfolio {
                        constraints: Mat::from_fn(1, n, |_, _| 1.0),
                        rhs: vec![1.0],
                        no_short: false,
                    },
                )
            }
            Mode::MinVarianceNoShort => {
                let qp = QuadraticProgram::budget(sigma0.clone());
                let w0 = solve_nonneg_qp(&qp).map_err(setup)?.weights;
                (
                    w0,
                    ModeData::Portfolio {
                        constraints: Mat::from_fn(1, n, |_, _| 1.0),
                        rhs: vec![1.0],
                        no_short: true,
                    },
                )
            }
            Mode::MeanVariance => {
                let settings = spec.mean_variance.as_ref().expect("validated");
                let mu = settings.expected_returns(n);
                let mut a = Mat::zeros(2, n);
                for j in 0..n {
                    a[(0, j)] = 1.0;
                    a[(1, j)] = mu[j];
                }
                let rhs = vec![1.0, settings.target_return];
                let qp = QuadraticProgram::new(sigma0.clone(), vec![0.0; n], a.clone(), rhs.clone())
                    .map_err(setup)?;
                let w0 = solve_equality_qp(&qp).map_err(setup)?.weights;
                (
                    w0,
                    ModeData::Portfolio {
                        constraints: a,
                        rhs,
                        no_short: false,
                    },
                )
            }
            Mode::Regression => {
                let settings = spec.regression.as_ref().expect("validated");
                (
                    settings.coefficients.materialize(n),
                    ModeData::Regression {
                        noise_sd: settings.noise_variance.sqrt(),
                        noise_variance: settings.noise_variance,
                    },
                )
            }
        };

        Ok(PointContext {
            n,
            t,
            process,
            sigma0,
            true_weights,
            iid_identity: matches!(spec.process, ProcessTemplate::IidGaussian),
            data,
        })
    }

    fn run_sample(&self, master_seed: u64, point_index: usize, sample_index: usize) -> SampleOutcome {
        let seed = sample_seed(master_seed, point_index, sample_index);
        let fail = |e: &QpError| {
            SampleOutcome::Failed(FailureRecord {
                sample_index,
                seed,
                kind: failure_kind(e),
            })
        };

        let (weights, zero_count, q0) = match &self.data {
            ModeData::Portfolio {
                constraints,
                rhs,
                no_short,
            } => {
                let sample =
                    generate_sample(&self.process, self.t, seed).expect("spec validated upfront");
                let sigma1 = empirical_covariance(&sample);
                let qp = QuadraticProgram::new(
                    sigma1,
                    vec![0.0; self.n],
                    constraints.clone(),
                    rhs.clone(),
                )
                .expect("portfolio program shapes are fixed");
                let solved = if *no_short {
                    solve_nonneg_qp(&qp)
                } else {
                    solve_equality_qp(&qp)
                };
                let sol = match solved {
                    Ok(s) => s,
                    Err(e) => return fail(&e),
                };
                let q0 = q0_variance(&sol.weights, &self.true_weights, &self.sigma0)
                    .expect("true risk is positive for a valid process");
                if self.iid_identity {
                    // under the identity covariance the explicit formula must
                    // agree with the quadratic-form route per sample
                    debug_assert!(
                        (q0 - q0_iid_shortcut(&sol.weights).expect("budget holds")).abs() <= 1e-10
                    );
                }
                let zeros = if *no_short {
                    sol.weights.iter().filter(|&&w| w <= ZERO_WEIGHT_TOL).count()
                } else {
                    0
                };
                (sol.weights, zeros, q0)
            }
            ModeData::Regression {
                noise_sd,
                noise_variance,
            } => {
                let x = generate_sample(&self.process, self.t, sub_seed(seed, REGRESSOR_STREAM))
                    .expect("spec validated upfront");
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, NOISE_STREAM));
                let y: Vec<f64> = (0..self.t)
                    .map(|step| {
                        let signal: f64 = (0..self.n)
                            .map(|i| self.true_weights[i] * x.value(i, step))
                            .sum();
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        signal + noise_sd * eps
                    })
                    .collect();
                let reg = regression_to_qp(&x, &y).expect("dimensions are consistent");
                let sol = match solve_equality_qp(&reg.qp) {
                    Ok(s) => s,
                    Err(e) => return fail(&e),
                };
                // population prediction error of coefficient vector w
                let cost = |w: &[f64]| {
                    let delta: Vec<f64> = w
                        .iter()
                        .zip(&self.true_weights)
                        .map(|(a, b)| a - b)
                        .collect();
                    noise_variance + self.sigma0.quadratic_form(&delta)
                };
                let q0 = q0_general(cost, &sol.weights, &self.true_weights)
                    .expect("positive noise variance was validated");
                (sol.weights, 0, q0)
            }
        };

        assert!(
            q0 >= 1.0 - 1e-10,
            "estimated optimum beat the true optimum under the true risk (q0 = {q0})"
        );
        SampleOutcome::Solved(ErrorSample {
            q0,
            weights,
            zero_count,
            sample_seed: seed,
        })
    }
}

/// Run a single Monte Carlo draw of one grid point. Deterministic in
/// `(spec, point_index, sample_index)`.
pub fn run_sample(
    spec: &ExperimentSpec,
    point_index: usize,
    sample_index: usize,
) -> Result<SampleOutcome, ExperimentError> {
    spec.validate()?;
    let ctx = PointContext::build(spec, point_index)?;
    Ok(ctx.run_sample(spec.master_seed, point_index, sample_index))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub points: Vec<SweepPoint>,
    /// Per-point failure records, parallel to `points`.
    pub failures: Vec<Vec<FailureRecord>>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

/// Execute every grid point with `n_samples` draws each. `workers` pins the
/// rayon pool size; `None` uses the global pool. The result is a pure
/// function of the spec, independent of the worker count.
pub fn run_sweep(
    spec: &ExperimentSpec,
    workers: Option<usize>,
) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();

    let contexts = (0..spec.grid.len())
        .map(|p| PointContext::build(spec, p))
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|p| (0..spec.n_samples).map(move |s| (p, s)))
        .collect();
    let master = spec.master_seed;
    let sample_all = || -> Vec<SampleOutcome> {
        jobs.par_iter()
            .map(|&(p, s)| contexts[p].run_sample(master, p, s))
            .collect()
    };
    let outcomes = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| ExperimentError::Setup(e.to_string()))?
            .install(sample_all),
        None => sample_all(),
    };

    let mut points = Vec::with_capacity(spec.grid.len());
    let mut failures = Vec::with_capacity(spec.grid.len());
    for (p, ctx) in contexts.iter().enumerate() {
        let slice = &outcomes[p * spec.n_samples..(p + 1) * spec.n_samples];
        let (point, failed) = aggregate(ctx, slice);
        debug_assert_eq!(point.n_samples + failed.len(), spec.n_samples);
        points.push(point);
        failures.push(failed);
    }

    Ok(ExperimentResult {
        spec: spec.clone(),
        points,
        failures,
        started_unix,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Aggregation is sequential and ordered by sample index, which keeps the
/// sweep bit-reproducible under any scheduling.
fn aggregate(ctx: &PointContext, outcomes: &[SampleOutcome]) -> (SweepPoint, Vec<FailureRecord>) {
    let mut q0s = Vec::with_capacity(outcomes.len());
    let mut weight_stds = Vec::with_capacity(outcomes.len());
    let mut zero_fractions = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Solved(s) => {
                q0s.push(s.q0);
                weight_stds.push(s.weight_std());
                zero_fractions.push(s.zero_count as f64 / ctx.n as f64);
            }
            SampleOutcome::Failed(record) => failed.push(record.clone()),
        }
    }
    let point = SweepPoint {
        n: ctx.n,
        t: ctx.t,
        r: ctx.n as f64 / ctx.t as f64,
        q0_mean: mean(&q0s),
        q0_std: sample_std(&q0s),
        weight_std_mean: mean(&weight_stds),
        zero_fraction_mean: mean(&zero_fractions),
        n_samples: q0s.len(),
        histogram: q0_histogram(&q0s),
    };
    (point, failed)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Per-point mean cross-sectional weight dispersion against the sample
/// ratio; the input for the weight-fluctuation exponent fit. Unconstrained
/// minimum-variance mode only, below the critical ratio.
pub fn weight_dispersion_scan(
    spec: &ExperimentSpec,
    workers: Option<usize>,
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    if spec.mode != Mode::MinVariance {
        return Err(ExperimentError::InvalidSpec(
            "weight dispersion scans require min_variance mode".into(),
        ));
    }
    let result = run_sweep(spec, workers)?;
    Ok(result
        .points
        .iter()
        .map(|p| (p.r, p.weight_std_mean))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iid_spec(grid: Vec<(usize, usize)>, n_samples: usize, seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            process: ProcessTemplate::IidGaussian,
            mode: Mode::MinVariance,
            grid,
            n_samples,
            master_seed: seed,
            regression: None,
            mean_variance: None,
        }
    }

    #[test]
    fn seeds_have_no_obvious_collisions() {
        let mut seen = std::collections::HashSet::new();
        for p in 0..40 {
            for s in 0..500 {
                assert!(seen.insert(sample_seed(42, p, s)));
            }
        }
        assert_ne!(sample_seed(1, 0, 0), sample_seed(2, 0, 0));
    }

    #[test]
    fn single_sample_in_the_low_noise_limit() {
        let spec = iid_spec(vec![(2, 1_000_000)], 1, 7);
        let outcome = run_sample(&spec, 0, 0).unwrap();
        match outcome {
            SampleOutcome::Solved(s) => {
                assert!((s.q0 - 1.0).abs() < 1e-2, "q0 = {}", s.q0);
                assert_eq!(s.zero_count, 0);
            }
            SampleOutcome::Failed(f) => panic!("unexpected failure {f:?}"),
        }
    }

    #[test]
    fn run_sample_is_deterministic() {
        let spec = iid_spec(vec![(8, 32)], 1, 99);
        let a = run_sample(&spec, 0, 0).unwrap();
        let b = run_sample(&spec, 0, 0).unwrap();
        match (a, b) {
            (SampleOutcome::Solved(x), SampleOutcome::Solved(y)) => {
                assert_eq!(x.q0.to_bits(), y.q0.to_bits());
                assert_eq!(x.weights, y.weights);
                assert_eq!(x.sample_seed, y.sample_seed);
            }
            _ => panic!("expected solved samples"),
        }
    }

    #[test]
    fn near_critical_samples_show_large_errors() {
        // analytic mean at N/T = 100/110 is about 3.3; single draws scatter
        // widely this close to the transition, so check the typical level
        let spec = iid_spec(vec![(100, 110)], 8, 1234);
        let mut q0s = Vec::new();
        for s in 0..8 {
            match run_sample(&spec, 0, s).unwrap() {
                SampleOutcome::Solved(sample) => q0s.push(sample.q0),
                SampleOutcome::Failed(f) => panic!("unexpected failure {f:?}"),
            }
        }
        let mean = q0s.iter().sum::<f64>() / q0s.len() as f64;
        assert!(mean > 2.5, "mean q0 = {mean} over {q0s:?}");
        assert!(q0s.iter().all(|&q| q > 1.5));
    }

    #[test]
    fn sweep_results_are_worker_count_invariant() {
        let spec = iid_spec(vec![(6, 24), (8, 16)], 40, 2024);
        let one = run_sweep(&spec, Some(1)).unwrap();
        let four = run_sweep(&spec, Some(4)).unwrap();
        let default = run_sweep(&spec, None).unwrap();
        assert_eq!(one.points, four.points);
        assert_eq!(one.points, default.points);
        assert_eq!(one.failures, four.failures);
    }

    #[test]
    fn sweep_accounting_is_complete() {
        let spec = ExperimentSpec {
            mode: Mode::MinVarianceNoShort,
            ..iid_spec(vec![(10, 5)], 25, 5)
        };
        let result = run_sweep(&spec, Some(2)).unwrap();
        for (point, failures) in result.points.iter().zip(&result.failures) {
            assert_eq!(point.n_samples + failures.len(), spec.n_samples);
            let histogram_total: u64 = point.histogram.iter().map(|b| b.count).sum();
            assert_eq!(histogram_total as usize, point.n_samples);
        }
    }

    #[test]
    fn no_short_zeroes_appear_beyond_the_critical_ratio() {
        let spec = ExperimentSpec {
            mode: Mode::MinVarianceNoShort,
            ..iid_spec(vec![(12, 6)], 30, 77)
        };
        let result = run_sweep(&spec, None).unwrap();
        assert!(result.failures[0].is_empty());
        assert!(result.points[0].zero_fraction_mean > 0.2);
    }

    #[test]
    fn regression_mode_runs_and_reports_q0_above_one() {
        let spec = ExperimentSpec {
            process: ProcessTemplate::IidGaussian,
            mode: Mode::Regression,
            grid: vec![(5, 40)],
            n_samples: 50,
            master_seed: 3,
            regression: Some(RegressionSettings {
                coefficients: CoefficientSpec::Uniform(1.0),
                noise_variance: 0.5,
            }),
            mean_variance: None,
        };
        let result = run_sweep(&spec, None).unwrap();
        assert!(result.failures[0].is_empty());
        assert!(result.points[0].q0_mean > 1.0);
        assert_eq!(result.points[0].zero_fraction_mean, 0.0);
    }

    #[test]
    fn mean_variance_mode_runs() {
        let spec = ExperimentSpec {
            process: ProcessTemplate::IidGaussian,
            mode: Mode::MeanVariance,
            grid: vec![(8, 40)],
            n_samples: 30,
            master_seed: 8,
            regression: None,
            mean_variance: Some(MeanVarianceSettings {
                return_low: 0.0,
                return_high: 0.1,
                target_return: 0.05,
            }),
        };
        let result = run_sweep(&spec, None).unwrap();
        assert!(result.failures[0].is_empty());
        assert!(result.points[0].q0_mean >= 1.0);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        // empty grid
        assert!(iid_spec(vec![], 10, 1).validate().is_err());
        // unconstrained mode at the critical ratio
        assert!(iid_spec(vec![(10, 10)], 10, 1).validate().is_err());
        // but the short-selling ban admits it
        let ok = ExperimentSpec {
            mode: Mode::MinVarianceNoShort,
            ..iid_spec(vec![(10, 10)], 10, 1)
        };
        assert!(ok.validate().is_ok());
        // regression mode without settings
        let bad = ExperimentSpec {
            mode: Mode::Regression,
            ..iid_spec(vec![(5, 20)], 10, 1)
        };
        assert!(bad.validate().is_err());
        // stray settings for a portfolio mode
        let bad = ExperimentSpec {
            regression: Some(RegressionSettings {
                coefficients: CoefficientSpec::Uniform(1.0),
                noise_variance: 1.0,
            }),
            ..iid_spec(vec![(5, 20)], 10, 1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dispersion_scan_requires_min_variance_mode() {
        let spec = ExperimentSpec {
            mode: Mode::MinVarianceNoShort,
            ..iid_spec(vec![(10, 20)], 5, 1)
        };
        assert!(weight_dispersion_scan(&spec, None).is_err());
    }

    #[test]
    fn dispersion_shrinks_in_the_data_rich_limit() {
        let spec = iid_spec(vec![(10, 10_000)], 10, 21);
        let scan = weight_dispersion_scan(&spec, None).unwrap();
        assert!(scan[0].1 < 0.02, "dispersion {} not near zero", scan[0].1);
    }
}
