//! Shared instance builders for the benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use estlab_core::{
    empirical_covariance, generate_sample, CovarianceMatrix, Mat, ProcessSpec, QuadraticProgram,
    SampleMatrix,
};

pub fn iid_sample(n: usize, t: usize, seed: u64) -> SampleMatrix {
    generate_sample(&ProcessSpec::IidGaussian { dim: n }, t, seed).expect("valid spec")
}

/// Well-conditioned random covariance (Gram of a slightly tall Gaussian
/// matrix plus a diagonal shift).
pub fn random_pd(n: usize, seed: u64) -> CovarianceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
    let m = Mat::from_fn(n, n, |i, j| {
        (0..n + 2).map(|k| g[(k, i)] * g[(k, j)]).sum::<f64>() / n as f64
            + if i == j { 0.05 } else { 0.0 }
    });
    CovarianceMatrix::new(m).expect("symmetric by construction")
}

/// Budget-constrained program on an empirical covariance; `t < n` produces
/// the rank-deficient regime that exercises the active-set solver hardest.
pub fn empirical_budget_program(n: usize, t: usize, seed: u64) -> QuadraticProgram {
    QuadraticProgram::budget(empirical_covariance(&iid_sample(n, t, seed)))
}
