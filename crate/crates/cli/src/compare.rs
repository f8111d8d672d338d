//! Cross-seed comparison of finished runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::experiment::read_summary;
use crate::format::float;

pub const COMPARISON_HEADER: &str = "method,mean_final_loss,std_final_loss,best_final_loss,worst_final_loss,n_seeds";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub best: f64,
    pub worst: f64,
    pub n_seeds: usize,
}

/// Final losses of every run in `run_dirs`, grouped by method, in
/// lexicographic method order.
pub fn tabulate(run_dirs: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    if run_dirs.is_empty() {
        return Err(CliError::Config("compare needs at least one run directory".into()));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for dir in run_dirs {
        let summary = read_summary(dir)?;
        if summary.runs.is_empty() {
            return Err(CliError::Input {
                path: dir.join(crate::experiment::SUMMARY_FILE),
                message: "summary lists no runs".into(),
            });
        }
        groups
            .entry(summary.method.to_string())
            .or_default()
            .extend(summary.runs.iter().map(|r| r.final_loss));
    }
    Ok(groups
        .into_iter()
        .map(|(method, losses)| {
            let n = losses.len() as f64;
            let mean = losses.iter().sum::<f64>() / n;
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
            ComparisonRow {
                method,
                mean,
                std: var.sqrt(),
                best: losses.iter().copied().fold(f64::INFINITY, f64::min),
                worst: losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_seeds: losses.len(),
            }
        })
        .collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            float(r.mean),
            float(r.std),
            float(r.best),
            float(r.worst),
            r.n_seeds
        );
    }
    out
}

pub fn compare(run_dirs: &[PathBuf], out_path: &Path) -> Result<Vec<ComparisonRow>> {
    let rows = tabulate(run_dirs)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(out_path, comparison_csv(&rows)).map_err(CliError::io(out_path))?;
    Ok(rows)
}
