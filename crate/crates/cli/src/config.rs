//! TOML run configuration.
//!
//! Everything scientific lives in the file so a run can be archived and
//! replayed from one artifact; the command line only overrides the output
//! directory, the worker count and the master seed. Unknown keys are a hard
//! error at every level — a typo never silently changes an experiment.
//!
//! ```toml
//! mode = "min_variance"    # min_variance | min_variance_no_short |
//!                          # mean_variance | regression
//! grid = [[100, 200], [100, 111]]   # (N, T) pairs
//! n_samples = 2000
//! master_seed = 42
//! output_dir = "runs/example"       # optional, default "out"
//! workers = 8                       # optional, default: all cores
//! verbosity = 1                     # optional: 0 quiet, 1 per-point lines
//!
//! [process]
//! family = "iid_gaussian"  # iid_gaussian | factor_gaussian | student_t |
//!                          # ccc_garch
//! # factor_gaussian: loading, idio_variance
//! # student_t:       tail_index (> 2)
//! # ccc_garch:       omega, arch, garch, correlation (all optional with
//! #                  defaults 0.05 / 0.05 / 0.90 / 0.3)
//!
//! [regression]             # regression mode only
//! coefficients = 1.0       # scalar broadcast or explicit [..] vector
//! noise_variance = 1.0
//!
//! [mean_variance]          # mean_variance mode only
//! return_low = 0.0
//! return_high = 0.1
//! target_return = 0.05
//!
//! [exponent]               # exponent subcommand only
//! metric = "q0_mean"       # q0_mean | weight_std_mean
//! synthetic_exact = false  # fit the exact analytic curve, no Monte Carlo
//! ```

use std::path::PathBuf;

use serde::Deserialize;

use estlab_core::{
    ExperimentSpec, MeanVarianceSettings, Mode, ProcessTemplate, RegressionSettings,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: Vec<(usize, usize)>,
    pub n_samples: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub verbosity: Option<u8>,
    pub process: ProcessConfig,
    #[serde(default)]
    pub regression: Option<RegressionSettings>,
    #[serde(default)]
    pub mean_variance: Option<MeanVarianceSettings>,
    #[serde(default)]
    pub exponent: Option<ExponentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    IidGaussian,
    FactorGaussian,
    StudentT,
    CccGarch,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub family: Family,
    #[serde(default)]
    pub loading: Option<f64>,
    #[serde(default)]
    pub idio_variance: Option<f64>,
    #[serde(default)]
    pub tail_index: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub arch: Option<f64>,
    #[serde(default)]
    pub garch: Option<f64>,
    #[serde(default)]
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMetric {
    Q0Mean,
    WeightStdMean,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub metric: ExponentMetric,
    #[serde(default)]
    pub synthetic_exact: bool,
}

impl ProcessConfig {
    fn reject_stray(&self, allowed: &[&str]) -> Result<(), String> {
        let present: &[(&str, bool)] = &[
            ("loading", self.loading.is_some()),
            ("idio_variance", self.idio_variance.is_some()),
            ("tail_index", self.tail_index.is_some()),
            ("omega", self.omega.is_some()),
            ("arch", self.arch.is_some()),
            ("garch", self.garch.is_some()),
            ("correlation", self.correlation.is_some()),
        ];
        for (name, is_set) in present {
            if *is_set && !allowed.contains(name) {
                return Err(format!(
                    "process key `{name}` does not apply to the configured family"
                ));
            }
        }
        Ok(())
    }

    pub fn to_template(&self) -> Result<ProcessTemplate, String> {
        match self.family {
            Family::IidGaussian => {
                self.reject_stray(&[])?;
                Ok(ProcessTemplate::IidGaussian)
            }
            Family::FactorGaussian => {
                self.reject_stray(&["loading", "idio_variance"])?;
                Ok(ProcessTemplate::FactorGaussian {
                    loading: self.loading.ok_or("factor_gaussian needs `loading`")?,
                    idio_variance: self
                        .idio_variance
                        .ok_or("factor_gaussian needs `idio_variance`")?,
                })
            }
            Family::StudentT => {
                self.reject_stray(&["tail_index"])?;
                Ok(ProcessTemplate::StudentT {
                    tail_index: self.tail_index.ok_or("student_t needs `tail_index`")?,
                })
            }
            Family::CccGarch => {
                self.reject_stray(&["omega", "arch", "garch", "correlation"])?;
                Ok(ProcessTemplate::CccGarch {
                    omega: self.omega.unwrap_or(0.05),
                    arch: self.arch.unwrap_or(0.05),
                    garch: self.garch.unwrap_or(0.90),
                    correlation: self.correlation.unwrap_or(0.3),
                })
            }
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Validated experiment spec; fails before any computation starts.
    pub fn to_spec(&self) -> Result<ExperimentSpec, String> {
        let spec = ExperimentSpec {
            process: self.process.to_template()?,
            mode: self.mode,
            grid: self.grid.clone(),
            n_samples: self.n_samples,
            master_seed: self.master_seed,
            regression: self.regression.clone(),
            mean_variance: self.mean_variance.clone(),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}
