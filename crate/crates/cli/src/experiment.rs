use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use dude_core::trainer::{eval_goal, make_task, summarize, train, MetricsRecord, Model, Summary};
use dude_core::Method;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::{CliError, Result};
use crate::format::float;

pub const METRICS_HEADER: &str = "step,loss,grad_norm,lr,eval";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FORMAT_VERSION: u32 = 1;

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_loss: f64,
    pub best_eval: Option<f64>,
    pub steps: usize,
    pub tail_mean_loss: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub format_version: u32,
    pub method: Method,
    pub steps: usize,
    pub runs: Vec<SeedSummary>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub metrics: Vec<PathBuf>,
    pub summary: PathBuf,
    pub config: ExperimentConfig,
}

pub fn metrics_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("metrics_{seed}.csv"))
}

pub fn run_experiment(config_path: &Path, overrides: &Overrides) -> Result<RunArtifact> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.apply(overrides)?;
    run_config(config)
}

/// Validates `config`, trains every seed (concurrently) and writes the
/// artifacts under `config.out_dir`.
pub fn run_config(config: ExperimentConfig) -> Result<RunArtifact> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(CliError::io(&config.out_dir))?;

    let results: Vec<Result<SeedSummary>> = thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let config = &config;
                scope.spawn(move || -> Result<SeedSummary> {
                    let (records, summary) = run_seed(config, seed)?;
                    let path = metrics_path(&config.out_dir, seed);
                    fs::write(&path, metrics_csv(&records)).map_err(CliError::io(&path))?;
                    Ok(SeedSummary {
                        seed,
                        final_loss: summary.final_loss,
                        best_eval: summary.best_eval,
                        steps: summary.steps,
                        tail_mean_loss: summary.tail_mean_loss,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let file = SummaryFile {
        format_version: FORMAT_VERSION,
        method: config.method,
        steps: config.steps,
        runs,
        config: config.clone(),
    };
    let summary = config.out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&file).expect("summary serializes");
    fs::write(&summary, json + "\n").map_err(CliError::io(&summary))?;

    Ok(RunArtifact {
        metrics: config.seeds.iter().map(|&s| metrics_path(&config.out_dir, s)).collect(),
        summary,
        config,
    })
}

/// Trains one seed. The seed drives the adapter's random init and the
/// training stream, and the task too unless the config pins `task.seed`.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<(Vec<MetricsRecord>, Summary)> {
    let t = &config.task;
    let task = make_task(t.kind, t.d, t.k, t.r_true, t.sigma, config.task_seed(seed))?;
    let mut model = Model::for_task(&task, &config.adapter_config(seed))?;
    let records = train(&mut model, &task, &config.train_config(seed))
        .map_err(|e| match e {
            dude_core::Error::NumericFailure { .. } => CliError::Numeric(format!("seed {seed}: {e}")),
            other => other.into(),
        })?;
    let summary = summarize(&records, eval_goal(task.loss_kind()))?;
    Ok((records, summary))
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let eval = r.eval.map(float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.step,
            float(r.loss),
            float(r.grad_norm),
            float(r.lr),
            eval
        );
    }
    out
}

pub fn read_summary(dir: &Path) -> Result<SummaryFile> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let file: SummaryFile = serde_json::from_str(&text).map_err(|e| CliError::Input {
        path: path.clone(),
        message: format!("corrupt summary: {e}"),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(CliError::Input {
            path,
            message: format!("unsupported format_version {}", file.format_version),
        });
    }
    Ok(file)
}
