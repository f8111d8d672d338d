//! `gradcheck` and `svd` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dude_core::grad::{grad_check, DEFAULT_GRADCHECK_TOLERANCE};
use dude_core::linalg::svd;
use dude_core::trainer::{make_task, TaskKind};
use dude_core::{AdapterConfig, AdapterState, GradCheckReport, Method};

use crate::error::{CliError, Result};
use crate::format::{float, matrix_to_csv, read_matrix_csv};

/// Shapes checked when `gradcheck` gets no explicit `--d/--k/--rank`.
pub const DEFAULT_SHAPES: [(usize, usize); 4] = [(2, 2), (5, 4), (4, 7), (16, 16)];

/// Ranks `{1, 2, min(d, k)}` for a `d×k` layer, deduplicated.
pub fn default_ranks(d: usize, k: usize) -> Vec<usize> {
    let mut ranks = vec![1, 2.min(d.min(k)), d.min(k)];
    ranks.dedup();
    ranks
}

/// One gradient-check case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckCase {
    pub method: Method,
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    pub seed: u64,
}

/// Builds a random layer for `case`: `W₀` with `N(0, 1/k)` entries,
/// initialized by the method and then jittered off its initial point so no
/// gradient is trivially zero.
pub fn random_layer(case: &GradCheckCase) -> Result<AdapterState> {
    if case.d == 0 || case.k == 0 {
        return Err(CliError::Config(format!("dims must be positive, got d={} k={}", case.d, case.k)));
    }
    let w0 = make_task(TaskKind::TeacherStudent, case.d, case.k, 0, 0.0, case.seed)?
        .base()
        .clone();
    let cfg = AdapterConfig::new(case.method, case.rank).with_seed(case.seed);
    let mut state = AdapterState::init(&w0, &cfg).map_err(|e| CliError::Config(format!("rank: {e}")))?;
    state.jitter_trainables(case.seed ^ 0x9e37_79b9_7f4a_7c15, 0.1);
    Ok(state)
}

pub fn check_case(case: &GradCheckCase) -> Result<GradCheckReport> {
    let state = random_layer(case)?;
    Ok(grad_check(&state, case.seed, DEFAULT_GRADCHECK_TOLERANCE)?)
}

pub fn describe(case: &GradCheckCase, report: &GradCheckReport) -> String {
    let mut line = format!(
        "{:<6} d={:<2} k={:<2} r={:<2} seed={}",
        case.method, case.d, case.k, case.rank, case.seed
    );
    for e in &report.errors {
        let _ = write!(line, "  {}={:.3e}", e.name, e.max_relative_error);
    }
    line.push_str(if report.pass { "  PASS" } else { "  FAIL" });
    line
}

/// Expands the command-line selection into cases. `method` may be `all`;
/// when `d`, `k` and `rank` are all absent, the default shape grid is used.
pub fn gradcheck_cases(
    method: &str,
    d: Option<usize>,
    k: Option<usize>,
    rank: Option<usize>,
    seed: u64,
) -> Result<Vec<GradCheckCase>> {
    let methods: Vec<Method> = if method == "all" {
        Method::ALL.to_vec()
    } else {
        vec![method
            .parse()
            .map_err(|e| CliError::Config(format!("field `method`: {e}")))?]
    };
    let shapes: Vec<(usize, usize, usize)> = match (d, k, rank) {
        (None, None, None) => DEFAULT_SHAPES
            .iter()
            .flat_map(|&(d, k)| default_ranks(d, k).into_iter().map(move |r| (d, k, r)))
            .collect(),
        (Some(d), Some(k), r) => {
            if d == 0 || k == 0 {
                return Err(CliError::Config(format!("dims must be positive, got d={d} k={k}")));
            }
            match r {
                Some(r) => vec![(d, k, r)],
                None => default_ranks(d, k).into_iter().map(|r| (d, k, r)).collect(),
            }
        }
        _ => return Err(CliError::Config("give both --d and --k, or neither".into())),
    };
    let mut cases = Vec::new();
    for &method in &methods {
        for &(d, k, rank) in &shapes {
            if method.is_low_rank() && (rank == 0 || rank > d.min(k)) {
                return Err(CliError::Config(format!(
                    "field `rank`: {rank} is outside 1..={} for a {d}x{k} layer",
                    d.min(k)
                )));
            }
            cases.push(GradCheckCase { method, d, k, rank, seed });
        }
    }
    Ok(cases)
}

/// Runs every case, printing one line each; fails if any case fails.
pub fn gradcheck_cmd(cases: &[GradCheckCase], out: &mut impl std::io::Write) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::with_capacity(cases.len());
    for case in cases {
        let report = check_case(case)?;
        let _ = writeln!(out, "{}", describe(case, &report));
        reports.push(report);
    }
    if let Some(bad) = reports.iter().find(|r| !r.pass) {
        return Err(CliError::GradCheckFailed {
            worst: bad.worst(),
            tolerance: bad.tolerance,
        });
    }
    Ok(reports)
}

/// Files written by [`svd_cmd`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvdOutputs {
    pub u: PathBuf,
    pub sigma: PathBuf,
    pub v: PathBuf,
    pub residual: PathBuf,
    pub residual_norm: f64,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Rank-`rank` truncated SVD of a CSV matrix, written as
/// `<prefix>_U.csv`, `<prefix>_sigma.csv`, `<prefix>_V.csv` and
/// `<prefix>_residual.txt` (Frobenius norm of `W − U_rΣ_rV_rᵀ`).
pub fn svd_cmd(input: &Path, rank: usize, prefix: &Path) -> Result<SvdOutputs> {
    let w = read_matrix_csv(input)?;
    let factors = svd(&w)?;
    let top = factors
        .truncate(rank)
        .map_err(|e| CliError::Config(format!("field `rank`: {e}")))?;
    let residual_norm = w.sub(&top.reconstruct())?.frobenius_norm();

    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let out = SvdOutputs {
        u: with_suffix(prefix, "_U.csv"),
        sigma: with_suffix(prefix, "_sigma.csv"),
        v: with_suffix(prefix, "_V.csv"),
        residual: with_suffix(prefix, "_residual.txt"),
        residual_norm,
    };
    let sigma: String = top.sigma().iter().map(|&s| float(s) + "\n").collect();
    fs::write(&out.u, matrix_to_csv(top.u())).map_err(CliError::io(&out.u))?;
    fs::write(&out.sigma, sigma).map_err(CliError::io(&out.sigma))?;
    fs::write(&out.v, matrix_to_csv(top.v())).map_err(CliError::io(&out.v))?;
    fs::write(&out.residual, float(residual_norm) + "\n").map_err(CliError::io(&out.residual))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_covers_all_shapes_and_ranks() {
        let cases = gradcheck_cases("dude", None, None, None, 1).unwrap();
        // (2,2): {1,2}; (5,4): {1,2,4}; (4,7): {1,2,4}; (16,16): {1,2,16}
        assert_eq!(cases.len(), 11);
        assert_eq!(gradcheck_cases("all", None, None, None, 1).unwrap().len(), 77);
    }

    #[test]
    fn selection_errors() {
        assert!(gradcheck_cases("nope", Some(2), Some(2), Some(1), 0).is_err());
        assert_eq!(gradcheck_cases("dude", Some(0), Some(2), Some(1), 0).unwrap_err().exit_code(), 1);
        assert!(gradcheck_cases("dude", Some(3), Some(3), Some(4), 0).is_err());
        assert!(gradcheck_cases("dude", Some(3), None, None, 0).is_err());
    }

    #[test]
    fn single_case_passes() {
        let cases = gradcheck_cases("dude", Some(5), Some(4), Some(2), 42).unwrap();
        let mut sink = Vec::new();
        let reports = gradcheck_cmd(&cases, &mut sink).unwrap();
        assert!(reports[0].pass);
        assert!(String::from_utf8(sink).unwrap().contains("PASS"));
    }
}
