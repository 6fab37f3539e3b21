//! `estlab` — batch interface to the estimation-error laboratory.
//!
//! Subcommands:
//! - `sweep    --config <file>`: run the configured Monte Carlo sweep and
//!   write `sweep.csv`, per-point histogram CSVs and `summary.json`;
//! - `exponent --config <file>`: run a sweep over an r grid (or use the
//!   exact analytic curve) and fit the critical exponent, writing
//!   `exponent.json`;
//! - `verify`: run the built-in fast invariant suite.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ExponentMetric, RunConfig};
use estlab_core::output::{self, write_atomic};
use estlab_core::{fit_critical_exponent, run_sweep, ExperimentError, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "estlab",
    version,
    about = "Monte Carlo laboratory for estimation error under sampling noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and persist sweep.csv, histograms and summary.json
    Sweep(RunArgs),
    /// Sweep an r grid and fit the critical exponent of the chosen metric
    Exponent(RunArgs),
    /// Run the fast built-in invariant suite
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (overrides the config)
    #[arg(long)]
    workers: Option<usize>,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    /// exit code 2
    Config(String),
    /// exit code 3
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Exponent(args) => cmd_exponent(&args),
        Command::Verify => {
            return if verify::run() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: verification failed");
                ExitCode::from(3)
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

struct LoadedRun {
    spec: ExperimentSpec,
    config: RunConfig,
    out_dir: PathBuf,
    workers: Option<usize>,
    verbosity: u8,
}

fn load_run(args: &RunArgs) -> Result<LoadedRun, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let config = RunConfig::parse(&text).map_err(CliError::Config)?;
    let mut spec = config.to_spec().map_err(CliError::Config)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let workers = args.workers.or(config.workers);
    let verbosity = config.verbosity.unwrap_or(1);
    Ok(LoadedRun {
        spec,
        config,
        out_dir,
        workers,
        verbosity,
    })
}

fn map_sweep_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::InvalidSpec(msg) => CliError::Config(msg),
        ExperimentError::Setup(msg) => CliError::Runtime(msg),
    }
}

fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let run = load_run(args)?;
    let result = run_sweep(&run.spec, run.workers).map_err(map_sweep_error)?;
    output::write_all(&run.out_dir, &result)
        .map_err(|e| CliError::Runtime(format!("writing results: {e}")))?;

    if run.verbosity >= 1 {
        for (point, failures) in result.points.iter().zip(&result.failures) {
            let analytic = output::analytic_reference(result.spec.mode, point.n, point.t)
                .map(|q| format!(" analytic={q:.5}"))
                .unwrap_or_default();
            println!(
                "N={} T={} r={:.4} samples={} q0_mean={:.5} q0_std={:.5} weight_std={:.5} zero_frac={:.4} failures={}{}",
                point.n,
                point.t,
                point.r,
                point.n_samples,
                point.q0_mean,
                point.q0_std,
                point.weight_std_mean,
                point.zero_fraction_mean,
                failures.len(),
                analytic,
            );
        }
        println!(
            "wrote sweep.csv, {} histogram file(s) and summary.json to {} in {:.1}s",
            result.points.len(),
            run.out_dir.display(),
            result.elapsed_seconds,
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ExponentPoint {
    n: usize,
    t: usize,
    r: f64,
    value: f64,
}

#[derive(Serialize)]
struct ExponentReport {
    metric: String,
    synthetic_exact: bool,
    exponent: f64,
    intercept: f64,
    r_squared: f64,
    expected_exponent: f64,
    points: Vec<ExponentPoint>,
}

fn cmd_exponent(args: &RunArgs) -> Result<(), CliError> {
    let run = load_run(args)?;
    let exponent_config = run.config.exponent.clone().ok_or_else(|| {
        CliError::Config("the exponent command needs an [exponent] section".into())
    })?;
    for &(n, t) in &run.spec.grid {
        if n >= t {
            return Err(CliError::Config(format!(
                "exponent fits need r = N/T < 1 at every grid point, got N={n}, T={t}"
            )));
        }
    }

    let (metric_name, points) = if exponent_config.synthetic_exact {
        // exact analytic curve, no Monte Carlo: a self-test of the fit path
        let points: Vec<ExponentPoint> = run
            .spec
            .grid
            .iter()
            .map(|&(n, t)| {
                let r = n as f64 / t as f64;
                ExponentPoint {
                    n,
                    t,
                    r,
                    value: (1.0 - r).powf(-0.5),
                }
            })
            .collect();
        ("analytic_q0", points)
    } else {
        let result = run_sweep(&run.spec, run.workers).map_err(map_sweep_error)?;
        let points = result
            .points
            .iter()
            .map(|p| ExponentPoint {
                n: p.n,
                t: p.t,
                r: p.r,
                value: match exponent_config.metric {
                    ExponentMetric::Q0Mean => p.q0_mean,
                    ExponentMetric::WeightStdMean => p.weight_std_mean,
                },
            })
            .collect();
        let name = match exponent_config.metric {
            ExponentMetric::Q0Mean => "q0_mean",
            ExponentMetric::WeightStdMean => "weight_std_mean",
        };
        (name, points)
    };

    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.r, p.value)).collect();
    let fit = fit_critical_exponent(&data)
        .map_err(|e| CliError::Runtime(format!("exponent fit failed: {e}")))?;

    let report = ExponentReport {
        metric: metric_name.to_string(),
        synthetic_exact: exponent_config.synthetic_exact,
        exponent: fit.exponent,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        expected_exponent: -0.5,
        points,
    };
    let mut bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&run.out_dir, "exponent.json", &bytes)
        .map_err(|e| CliError::Runtime(format!("writing exponent.json: {e}")))?;

    if run.verbosity >= 1 {
        println!(
            "fitted exponent {:.4} (expected -0.5), intercept {:.4}, r^2 {:.6}; wrote exponent.json to {}",
            fit.exponent,
            fit.intercept,
            fit.r_squared,
            run.out_dir.display(),
        );
    }
    Ok(())
}
