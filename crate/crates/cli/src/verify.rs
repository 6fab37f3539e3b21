//! Built-in fast invariant suite behind `estlab verify`.
//!
//! A handful of cross-checks that catch the classic silent breakages: a
//! wrong covariance normalization, a drifting solver, a broken seed mixer.
//! Runs in seconds and prints one line per property.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use estlab_core::linalg::Mat;
use estlab_core::qp::kkt_report;
use estlab_core::{
    brute_force_oracle, empirical_covariance, fit_critical_exponent, generate_sample, q0_general,
    q0_iid_shortcut, q0_variance, run_sweep, sample_seed, solve_equality_qp, solve_min_variance,
    solve_nonneg_qp, CovarianceMatrix, ExperimentSpec, Mode, ProcessSpec, ProcessTemplate,
    QuadraticProgram,
};

type Check = (&'static str, fn() -> Result<(), String>);

const CHECKS: &[Check] = &[
    (
        "closed-form minimum variance matches the KKT solve",
        check_closed_form_vs_kkt,
    ),
    (
        "active-set solver matches the enumeration oracle",
        check_active_set_vs_oracle,
    ),
    ("q0 identities hold", check_q0_identities),
    (
        "covariance estimator matches the direct double sum",
        check_covariance_double_sum,
    ),
    (
        "sample generation is deterministic per seed",
        check_generation_determinism,
    ),
    (
        "sweeps are invariant to the worker count",
        check_worker_invariance,
    ),
    (
        "exact power-law data fits exponent -1/2",
        check_exponent_fit,
    ),
    ("seed mixing separates streams", check_seed_mixing),
];

/// Run every check; returns true iff all pass. Failures are printed with the
/// property named.
pub fn run() -> bool {
    let mut all_ok = true;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("ok    {name}"),
            Err(msg) => {
                println!("FAIL  {name}: {msg}");
                all_ok = false;
            }
        }
    }
    all_ok
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> CovarianceMatrix {
    let g = Mat::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
    let m = Mat::from_fn(n, n, |i, j| {
        (0..n + 2).map(|k| g[(k, i)] * g[(k, j)]).sum::<f64>() / n as f64
            + if i == j { 0.05 } else { 0.0 }
    });
    CovarianceMatrix::new(m).expect("symmetric by construction")
}

fn check_closed_form_vs_kkt() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..20 {
        let n = rng.random_range(2..=9);
        let sigma = random_pd(n, &mut rng);
        let closed = solve_min_variance(&sigma).map_err(|e| e.to_string())?;
        let qp = QuadraticProgram::budget(sigma);
        let kkt = solve_equality_qp(&qp).map_err(|e| e.to_string())?;
        for (a, b) in closed.weights.iter().zip(&kkt.weights) {
            if (a - b).abs() > 1e-10 {
                return Err(format!("trial {trial}: weights diverge by {:e}", (a - b).abs()));
            }
        }
        let report = kkt_report(&qp, &kkt);
        if report.stationarity > 1e-10 || report.feasibility > 1e-10 {
            return Err(format!("trial {trial}: KKT residuals too large"));
        }
    }
    Ok(())
}

fn check_active_set_vs_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..50 {
        let n = rng.random_range(2..=6);
        let qp = QuadraticProgram::budget(random_pd(n, &mut rng));
        let fast = solve_nonneg_qp(&qp).map_err(|e| e.to_string())?;
        let slow = brute_force_oracle(&qp).map_err(|e| e.to_string())?;
        if (fast.objective - slow.objective).abs() > 1e-8 {
            return Err(format!(
                "trial {trial}: objectives {} vs {}",
                fast.objective, slow.objective
            ));
        }
    }
    Ok(())
}

fn check_q0_identities() -> Result<(), String> {
    let sigma = CovarianceMatrix::identity(4);
    let uniform = vec![0.25; 4];
    let w = vec![0.4, 0.3, 0.2, 0.1];
    let identity_q0 = q0_variance(&w, &w, &sigma).map_err(|e| e.to_string())?;
    if identity_q0 != 1.0 {
        return Err(format!("q0(w, w) = {identity_q0}, expected exactly 1"));
    }
    let quadratic = q0_variance(&w, &uniform, &sigma).map_err(|e| e.to_string())?;
    let shortcut = q0_iid_shortcut(&w).map_err(|e| e.to_string())?;
    if (quadratic - shortcut).abs() > 1e-12 {
        return Err(format!("shortcut {shortcut} vs quadratic route {quadratic}"));
    }
    let general = q0_general(|v| sigma.quadratic_form(v), &w, &uniform).map_err(|e| e.to_string())?;
    if (general - quadratic).abs() > 1e-12 {
        return Err("general cost form disagrees with the quadratic form".into());
    }
    Ok(())
}

fn check_covariance_double_sum() -> Result<(), String> {
    let spec = ProcessSpec::IidGaussian { dim: 5 };
    for seed in 0..5 {
        let sample = generate_sample(&spec, 7, seed).map_err(|e| e.to_string())?;
        let cov = empirical_covariance(&sample);
        for i in 0..5 {
            for j in 0..5 {
                let mut acc = 0.0;
                for t in 0..7 {
                    acc += sample.value(i, t) * sample.value(j, t);
                }
                let reference = acc / 7.0;
                if (cov.mat()[(i, j)] - reference).abs() > 1e-12 {
                    return Err(format!(
                        "entry ({i},{j}) differs from the double sum at seed {seed}"
                    ));
                }
            }
        }
    }
    Ok(())
}

fn check_generation_determinism() -> Result<(), String> {
    let specs = [
        ProcessSpec::IidGaussian { dim: 4 },
        ProcessSpec::StudentT {
            tail_index: 4.0,
            scale: Mat::identity(4),
        },
    ];
    for spec in &specs {
        let a = generate_sample(spec, 16, 99).map_err(|e| e.to_string())?;
        let b = generate_sample(spec, 16, 99).map_err(|e| e.to_string())?;
        if a != b {
            return Err("identical (spec, T, seed) produced different samples".into());
        }
    }
    Ok(())
}

fn check_worker_invariance() -> Result<(), String> {
    let spec = ExperimentSpec {
        process: ProcessTemplate::IidGaussian,
        mode: Mode::MinVariance,
        grid: vec![(6, 24)],
        n_samples: 24,
        master_seed: 11,
        regression: None,
        mean_variance: None,
    };
    let one = run_sweep(&spec, Some(1)).map_err(|e| e.to_string())?;
    let three = run_sweep(&spec, Some(3)).map_err(|e| e.to_string())?;
    if one.points != three.points {
        return Err("sweep aggregates depend on the worker count".into());
    }
    Ok(())
}

fn check_exponent_fit() -> Result<(), String> {
    let points: Vec<(f64, f64)> = [0.5f64, 0.6, 0.7, 0.8, 0.9]
        .iter()
        .map(|&r| (r, (1.0 - r).powf(-0.5)))
        .collect();
    let fit = fit_critical_exponent(&points).map_err(|e| e.to_string())?;
    if (fit.exponent + 0.5).abs() > 1e-12 {
        return Err(format!("fitted {} on exact data", fit.exponent));
    }
    Ok(())
}

fn check_seed_mixing() -> Result<(), String> {
    let mut seen = std::collections::HashSet::new();
    for p in 0..32 {
        for s in 0..256 {
            if !seen.insert(sample_seed(7, p, s)) {
                return Err(format!("seed collision at point {p}, sample {s}"));
            }
        }
    }
    if sample_seed(7, 0, 1) == sample_seed(7, 1, 0) {
        return Err("point and sample indices are interchangeable".into());
    }
    Ok(())
}
