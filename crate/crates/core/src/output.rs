//! Result persistence: per-point CSV, per-point histogram CSVs, and a JSON
//! summary embedding the full spec (master seed included) so any archived
//! run can be reproduced exactly.
//!
//! All files are written atomically (temp file in the target directory, then
//! rename); a crashed run never leaves a truncated file that looks complete.
//! Floats are printed with 17 significant digits so reruns can be compared
//! byte for byte.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::experiment::{ExperimentResult, Mode};
use crate::metrics::analytic_q0;

/// Round-trip float formatting: 17 significant digits in scientific
/// notation.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write bytes to `dir/name` via a temp file plus rename in the same
/// directory, so readers never observe a partially written file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Reference value for the per-point summary line: the analytic mean applies
/// to the unconstrained minimum-variance mode below the critical ratio.
pub fn analytic_reference(mode: Mode, n: usize, t: usize) -> Option<f64> {
    if mode == Mode::MinVariance {
        analytic_q0(n, t).ok()
    } else {
        None
    }
}

/// `sweep.csv`: one row per grid point.
pub fn write_sweep_csv(dir: &Path, result: &ExperimentResult) -> io::Result<PathBuf> {
    let mut text = String::from(
        "N,T,r,n_samples,q0_mean,q0_std,weight_std_mean,zero_fraction_mean,failures,analytic_q0\n",
    );
    for (point, failures) in result.points.iter().zip(&result.failures) {
        let analytic = analytic_reference(result.spec.mode, point.n, point.t)
            .map(format_f64)
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            point.n,
            point.t,
            format_f64(point.r),
            point.n_samples,
            format_f64(point.q0_mean),
            format_f64(point.q0_std),
            format_f64(point.weight_std_mean),
            format_f64(point.zero_fraction_mean),
            failures.len(),
            analytic,
        ));
    }
    write_atomic(dir, "sweep.csv", text.as_bytes())
}

/// `hist_N{n}_T{t}.csv` per grid point: fixed-width q0 bins plus the
/// overflow bin (upper edge `inf`).
pub fn write_histogram_csvs(dir: &Path, result: &ExperimentResult) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(result.points.len());
    for point in &result.points {
        let mut text = String::from("bin_lower,bin_upper,count\n");
        for bin in &point.histogram {
            text.push_str(&format!(
                "{},{},{}\n",
                format_f64(bin.lower),
                format_f64(bin.upper),
                bin.count
            ));
        }
        let name = format!("hist_N{}_T{}.csv", point.n, point.t);
        paths.push(write_atomic(dir, &name, text.as_bytes())?);
    }
    Ok(paths)
}

/// `summary.json`: the full result including the spec echo; histograms live
/// in their CSVs.
pub fn write_summary_json(dir: &Path, result: &ExperimentResult) -> io::Result<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(result)?;
    bytes.push(b'\n');
    write_atomic(dir, "summary.json", &bytes)
}

/// Write the complete output set of a sweep into `dir`.
pub fn write_all(dir: &Path, result: &ExperimentResult) -> io::Result<()> {
    write_sweep_csv(dir, result)?;
    write_histogram_csvs(dir, result)?;
    write_summary_json(dir, result)?;
    Ok(())
}
