//! A simulation laboratory for estimation error in sample-based quadratic
//! optimization.
//!
//! When the problem dimension N and the sample length T grow together, the
//! quality of a sample-optimized portfolio (or regression fit) is governed by
//! the ratio N/T alone; the relative extra risk q0 carried by the estimated
//! optimum diverges like `(1 - N/T)^(-1/2)` as N/T approaches 1. This crate
//! reproduces that divergence numerically and measures everything around it:
//! the q0 distribution, its critical exponent across several return
//! processes, the weight fluctuations, and the spontaneous zeroing of
//! weights once short selling is banned.
//!
//! Module map:
//! - [`process`]: return generators with exactly known population moments;
//! - [`moments`]: the uncentered covariance / cross-moment estimators;
//! - [`qp`]: equality-constrained KKT solves, the closed-form minimum
//!   variance portfolio, the nonnegative active-set solver, and the
//!   brute-force oracle used to test it;
//! - [`metrics`]: q0 in its several equivalent forms, the analytic mean, and
//!   the log-log exponent fit;
//! - [`experiment`]: deterministic parallel Monte Carlo sweeps;
//! - [`output`]: atomic CSV/JSON persistence of sweep results;
//! - [`linalg`]: the dense factorizations behind everything.
//!
//! Reproducibility contract: every sample's RNG is a ChaCha8 stream seeded
//! by a SplitMix64-style mix of `(master_seed, point_index, sample_index)`;
//! results are bit-identical across reruns and worker counts on a given
//! build.

pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod output;
pub mod process;
pub mod qp;

pub use experiment::{
    run_sample, run_sweep, sample_seed, weight_dispersion_scan, CoefficientSpec, ExperimentError,
    ExperimentResult, ExperimentSpec, FailureKind, FailureRecord, MeanVarianceSettings, Mode,
    ProcessTemplate, RegressionSettings, SampleOutcome,
};
pub use linalg::Mat;
pub use metrics::{
    analytic_q0, fit_critical_exponent, q0_general, q0_iid_shortcut, q0_variance, ErrorSample,
    ExponentFit, HistogramBin, MetricsError, SweepPoint,
};
pub use moments::{
    empirical_covariance, empirical_cross_moment, numerical_rank, CovarianceMatrix, MomentError,
};
pub use process::{generate_sample, ProcessError, ProcessSpec, SampleMatrix};
pub use qp::{
    brute_force_oracle, kkt_report, regression_to_qp, solve_equality_qp, solve_min_variance,
    solve_nonneg_qp, QpError, QuadraticProgram, RegressionQp, Solution, SolveStatus,
    ZERO_WEIGHT_TOL,
};
