//! Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them). Tolerances are pinned here and
//! nowhere else.
//!
//! Monte Carlo criteria use fixed master seeds, so every run of this suite
//! is a deterministic replay, not a flaky estimate.

use estlab_core::qp::kkt_report;
use estlab_core::{
    brute_force_oracle, empirical_covariance, fit_critical_exponent, generate_sample, output,
    q0_general, regression_to_qp, run_sweep, solve_equality_qp, solve_min_variance,
    solve_nonneg_qp, CoefficientSpec, CovarianceMatrix, ExperimentSpec, Mat, Mode, ProcessSpec,
    ProcessTemplate, QpError, QuadraticProgram, RegressionSettings,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn criterion(name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("PASS {name}"),
        Err(msg) => {
            println!("FAIL {name}: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

fn spec(
    process: ProcessTemplate,
    mode: Mode,
    grid: Vec<(usize, usize)>,
    n_samples: usize,
    master_seed: u64,
) -> ExperimentSpec {
    ExperimentSpec {
        process,
        mode,
        grid,
        n_samples,
        master_seed,
        regression: None,
        mean_variance: None,
    }
}

/// r = {0.5, 0.6, 0.7, 0.8, 0.9} at N = 100.
fn ratio_grid() -> Vec<(usize, usize)> {
    vec![(100, 200), (100, 167), (100, 143), (100, 125), (100, 111)]
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> CovarianceMatrix {
    let g = Mat::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
    let m = Mat::from_fn(n, n, |i, j| {
        (0..n + 2).map(|k| g[(k, i)] * g[(k, j)]).sum::<f64>() / n as f64
            + if i == j { 0.05 } else { 0.0 }
    });
    CovarianceMatrix::new(m).expect("symmetric by construction")
}

/// Test-local Gaussian elimination with partial pivoting; the independent
/// route against which the solver-based regression path is checked.
fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

#[test]
fn criterion_01_analytic_mean_at_half_ratio() {
    criterion("criterion 1: q0 mean at N/T = 1/2 within 5% of sqrt(2)", || {
        let spec = spec(
            ProcessTemplate::IidGaussian,
            Mode::MinVariance,
            vec![(100, 200)],
            2000,
            2026_01,
        );
        let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
        let point = &result.points[0];
        if point.n_samples != 2000 {
            return Err(format!("{} of 2000 samples solved", point.n_samples));
        }
        let expected = 2.0f64.sqrt();
        let rel = (point.q0_mean - expected).abs() / expected;
        if rel > 0.05 {
            return Err(format!(
                "q0_mean = {:.5}, {:.2}% away from sqrt(2)",
                point.q0_mean,
                100.0 * rel
            ));
        }
        Ok(())
    });
}

#[test]
fn criterion_02_divergence_ratio() {
    criterion(
        "criterion 2: q0_mean(r=0.9) / q0_mean(r=0.5) within 10% of sqrt(5)",
        || {
            let spec = spec(
                ProcessTemplate::IidGaussian,
                Mode::MinVariance,
                vec![(100, 200), (100, 111)],
                1000,
                2026_02,
            );
            let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
            let ratio = result.points[1].q0_mean / result.points[0].q0_mean;
            let expected = 5.0f64.sqrt();
            let rel = (ratio - expected).abs() / expected;
            if rel > 0.10 {
                return Err(format!(
                    "ratio = {ratio:.4}, {:.2}% away from sqrt(5)",
                    100.0 * rel
                ));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_03_iid_critical_exponent() {
    criterion("criterion 3: iid exponent of q0 in [-0.6, -0.4]", || {
        let spec = spec(
            ProcessTemplate::IidGaussian,
            Mode::MinVariance,
            ratio_grid(),
            500,
            2026_03,
        );
        let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
        let points: Vec<(f64, f64)> = result.points.iter().map(|p| (p.r, p.q0_mean)).collect();
        let fit = fit_critical_exponent(&points).map_err(|e| e.to_string())?;
        if !(-0.6..=-0.4).contains(&fit.exponent) {
            return Err(format!("exponent = {:.4}", fit.exponent));
        }
        Ok(())
    });
}

#[test]
fn criterion_04_universality_across_processes() {
    criterion(
        "criterion 4: one-factor and Student-t exponents in [-0.65, -0.35]",
        || {
            for (label, process) in [
                (
                    "one-factor",
                    ProcessTemplate::FactorGaussian {
                        loading: 0.5,
                        idio_variance: 1.0,
                    },
                ),
                ("student-t(4)", ProcessTemplate::StudentT { tail_index: 4.0 }),
            ] {
                let spec = spec(process, Mode::MinVariance, ratio_grid(), 500, 2026_04);
                let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
                let points: Vec<(f64, f64)> =
                    result.points.iter().map(|p| (p.r, p.q0_mean)).collect();
                let fit = fit_critical_exponent(&points).map_err(|e| e.to_string())?;
                if !(-0.65..=-0.35).contains(&fit.exponent) {
                    return Err(format!("{label}: exponent = {:.4}", fit.exponent));
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_05_self_averaging() {
    criterion(
        "criterion 5: q0 spread shrinks from N=50 to N=200 at fixed r=1/2",
        || {
            let spec = spec(
                ProcessTemplate::IidGaussian,
                Mode::MinVariance,
                vec![(50, 100), (200, 400)],
                2000,
                2026_05,
            );
            let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
            let (small, large) = (&result.points[0], &result.points[1]);
            if !(large.q0_std < small.q0_std) {
                return Err(format!(
                    "q0_std N=200: {:.5} not below N=50: {:.5}",
                    large.q0_std, small.q0_std
                ));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_06_weight_fluctuation_exponent() {
    criterion(
        "criterion 6: weight-dispersion exponent in [-0.6, -0.4]",
        || {
            let spec = spec(
                ProcessTemplate::IidGaussian,
                Mode::MinVariance,
                ratio_grid(),
                500,
                2026_06,
            );
            let scan =
                estlab_core::weight_dispersion_scan(&spec, None).map_err(|e| e.to_string())?;
            let fit = fit_critical_exponent(&scan).map_err(|e| e.to_string())?;
            if !(-0.6..=-0.4).contains(&fit.exponent) {
                return Err(format!("exponent = {:.4}", fit.exponent));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_07_short_selling_ban() {
    criterion(
        "criterion 7: no-short solves succeed at r = 0.5, 1, 2 with nondecreasing zero fraction",
        || {
            let spec = spec(
                ProcessTemplate::IidGaussian,
                Mode::MinVarianceNoShort,
                vec![(100, 200), (100, 100), (100, 50)],
                500,
                2026_07,
            );
            let result = run_sweep(&spec, None).map_err(|e| e.to_string())?;
            for (point, failures) in result.points.iter().zip(&result.failures) {
                if !failures.is_empty() {
                    return Err(format!(
                        "{} failures at N={}, T={} (first: {:?})",
                        failures.len(),
                        point.n,
                        point.t,
                        failures[0].kind
                    ));
                }
            }
            let fractions: Vec<f64> = result
                .points
                .iter()
                .map(|p| p.zero_fraction_mean)
                .collect();
            if !(fractions[0] <= fractions[1] && fractions[1] <= fractions[2]) {
                return Err(format!("zero fractions not nondecreasing: {fractions:?}"));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_08_solver_oracle_equivalence() {
    criterion(
        "criterion 8: active-set objective matches the enumeration oracle on 200 instances",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(2026_08);
            for trial in 0..200 {
                let n = rng.random_range(2..=6);
                let qp = QuadraticProgram::budget(random_pd(n, &mut rng));
                let fast = solve_nonneg_qp(&qp).map_err(|e| format!("trial {trial}: {e}"))?;
                let slow = brute_force_oracle(&qp).map_err(|e| format!("trial {trial}: {e}"))?;
                let gap = (fast.objective - slow.objective).abs();
                if gap > 1e-8 {
                    return Err(format!("trial {trial}: objective gap {gap:e}"));
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_09_closed_form_consistency() {
    criterion(
        "criterion 9: closed form and KKT solve agree to 1e-10 with clean residuals",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(2026_09);
            for trial in 0..100 {
                let n = rng.random_range(2..=12);
                let sigma = random_pd(n, &mut rng);
                let closed = solve_min_variance(&sigma).map_err(|e| e.to_string())?;
                let qp = QuadraticProgram::budget(sigma);
                let kkt = solve_equality_qp(&qp).map_err(|e| e.to_string())?;
                for (a, b) in closed.weights.iter().zip(&kkt.weights) {
                    if (a - b).abs() > 1e-10 {
                        return Err(format!("trial {trial}: weight gap {:e}", (a - b).abs()));
                    }
                }
                let report = kkt_report(&qp, &kkt);
                if report.stationarity > 1e-10 || report.feasibility > 1e-10 {
                    return Err(format!(
                        "trial {trial}: residuals {:e} / {:e}",
                        report.stationarity, report.feasibility
                    ));
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_10_regression_equivalence() {
    criterion(
        "criterion 10: regression matches normal equations; q0 >= 1 and grows with r",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(2026_10);
            let noise_var = 0.25f64;
            for trial in 0..100 {
                let n = rng.random_range(2..=5);
                let t = 50;
                let x = generate_sample(&ProcessSpec::IidGaussian { dim: n }, t, 9000 + trial)
                    .map_err(|e| e.to_string())?;
                let true_w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..t)
                    .map(|step| {
                        let signal: f64 =
                            (0..n).map(|i| true_w[i] * x.value(i, step)).sum();
                        signal + noise_var.sqrt() * rng.random_range(-1.0..1.0) * 1.732
                    })
                    .collect();
                let reg = regression_to_qp(&x, &y).map_err(|e| e.to_string())?;
                let sol = solve_equality_qp(&reg.qp).map_err(|e| e.to_string())?;

                // independent route: raw-loop moments + test-local LU
                let mut a = vec![vec![0.0; n]; n];
                let mut b = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        a[i][j] = (0..t).map(|s| x.value(i, s) * x.value(j, s)).sum::<f64>()
                            / t as f64;
                    }
                    b[i] = (0..t).map(|s| x.value(i, s) * y[s]).sum::<f64>() / t as f64;
                }
                let reference = lu_solve(a, b);
                for (got, want) in sol.weights.iter().zip(&reference) {
                    if (got - want).abs() > 1e-10 {
                        return Err(format!(
                            "trial {trial}: minimizer gap {:e}",
                            (got - want).abs()
                        ));
                    }
                }

                let cost = |w: &[f64]| {
                    let d2: f64 = w
                        .iter()
                        .zip(&true_w)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    noise_var + d2
                };
                let q0 = q0_general(cost, &sol.weights, &true_w).map_err(|e| e.to_string())?;
                if q0 < 1.0 - 1e-10 {
                    return Err(format!("trial {trial}: q0 = {q0} below 1"));
                }
            }

            // prediction error grows with the sampling ratio
            let sweep_spec = ExperimentSpec {
                process: ProcessTemplate::IidGaussian,
                mode: Mode::Regression,
                grid: vec![(50, 250), (50, 100), (50, 63)],
                n_samples: 500,
                master_seed: 2026_11,
                regression: Some(RegressionSettings {
                    coefficients: CoefficientSpec::Uniform(1.0),
                    noise_variance: noise_var,
                }),
                mean_variance: None,
            };
            let result = run_sweep(&sweep_spec, None).map_err(|e| e.to_string())?;
            let means: Vec<f64> = result.points.iter().map(|p| p.q0_mean).collect();
            if !(means[0] < means[1] && means[1] < means[2]) {
                return Err(format!("q0 means not increasing over r: {means:?}"));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_11_degenerate_regime_detection() {
    criterion(
        "criterion 11: T < N reports a singular system on 100/100 trials",
        || {
            let spec = ProcessSpec::IidGaussian { dim: 20 };
            for trial in 0..100 {
                let sample = generate_sample(&spec, 10, 40_000 + trial).map_err(|e| e.to_string())?;
                let sigma = empirical_covariance(&sample);
                match solve_min_variance(&sigma) {
                    Err(QpError::SingularSystem) => {}
                    other => {
                        return Err(format!(
                            "trial {trial}: expected SingularSystem, got {other:?}"
                        ))
                    }
                }
                match solve_equality_qp(&QuadraticProgram::budget(sigma)) {
                    Err(QpError::SingularSystem) => {}
                    other => {
                        return Err(format!(
                            "trial {trial}: KKT route expected SingularSystem, got {other:?}"
                        ))
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_12_reproducibility() {
    criterion(
        "criterion 12: reruns produce byte-identical CSVs for any worker count",
        || {
            let spec = spec(
                ProcessTemplate::IidGaussian,
                Mode::MinVariance,
                vec![(32, 64), (32, 40)],
                200,
                2026_12,
            );
            let dirs: Vec<tempfile::TempDir> = (0..3)
                .map(|_| tempfile::tempdir().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            for (dir, workers) in dirs.iter().zip([Some(1), Some(4), None]) {
                let result = run_sweep(&spec, workers).map_err(|e| e.to_string())?;
                output::write_all(dir.path(), &result).map_err(|e| e.to_string())?;
            }
            for name in ["sweep.csv", "hist_N32_T64.csv", "hist_N32_T40.csv"] {
                let reference = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
                for dir in &dirs[1..] {
                    let other = std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?;
                    if reference != other {
                        return Err(format!("{name} differs across runs"));
                    }
                }
            }
            Ok(())
        },
    );
}
