//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "task": { "kind": "teacher_student", "d": 16, "k": 16, "r_true": 2, "sigma": 0.01 },
//!   "method": "dude",
//!   "rank": 2,
//!   "lr": 0.001,
//!   "steps": 1000,
//!   "seeds": [42, 78, 512, 1234, 3407],
//!   "out_dir": "runs/dude"
//! }
//! ```
//!
//! Omitted fields take the defaults below. Without `task.seed`, each run seed
//! also seeds its own task instance.

use std::fs;
use std::path::{Path, PathBuf};

use dude_core::trainer::{OptimizerKind, Scheduler, TaskKind, TrainConfig, DEFAULT_SEEDS};
use dude_core::{AdapterConfig, Method};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub r_true: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub method: Method,
    #[serde(default = "defaults::rank")]
    pub rank: usize,
    #[serde(default = "defaults::scaling")]
    pub scaling: f64,
    /// Base learning rate; defaults per optimizer when absent.
    #[serde(default)]
    pub lr: Option<f64>,
    pub steps: usize,
    #[serde(default = "defaults::batch")]
    pub batch: usize,
    #[serde(default = "defaults::warmup_frac")]
    pub warmup_frac: f64,
    #[serde(default = "defaults::scheduler")]
    pub scheduler: Scheduler,
    #[serde(default = "defaults::optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    #[serde(default = "defaults::eval_size")]
    pub eval_size: usize,
    pub out_dir: PathBuf,
}

mod defaults {
    use super::*;

    pub fn rank() -> usize {
        1
    }
    pub fn scaling() -> f64 {
        AdapterConfig::DEFAULT_SCALING
    }
    pub fn batch() -> usize {
        32
    }
    pub fn warmup_frac() -> f64 {
        0.03
    }
    pub fn scheduler() -> Scheduler {
        Scheduler::Cosine
    }
    pub fn optimizer() -> OptimizerKind {
        OptimizerKind::Adam
    }
    pub fn seeds() -> Vec<u64> {
        DEFAULT_SEEDS.to_vec()
    }
    pub fn eval_every() -> usize {
        50
    }
    pub fn eval_size() -> usize {
        256
    }
}

/// Command-line overrides; each one replaces the file value when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub rank: Option<usize>,
    pub lr: Option<f64>,
}

fn field_error(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {reason}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                CliError::Config(inner.to_string())
            } else {
                field_error(&path, inner)
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(m) = &o.method {
            self.method = m.parse().map_err(|e| field_error("method", e))?;
        }
        if let Some(r) = o.rank {
            self.rank = r;
        }
        if let Some(lr) = o.lr {
            self.lr = Some(lr);
        }
        Ok(())
    }

    pub fn resolved_lr(&self) -> f64 {
        self.lr.unwrap_or_else(|| self.optimizer.default_lr())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.d == 0 {
            return Err(field_error("task.d", "must be at least 1"));
        }
        if t.k == 0 {
            return Err(field_error("task.k", "must be at least 1"));
        }
        if t.r_true > t.d.min(t.k) {
            return Err(field_error("task.r_true", format!("must be at most min(d, k) = {}", t.d.min(t.k))));
        }
        if !(t.sigma >= 0.0 && t.sigma.is_finite()) {
            return Err(field_error("task.sigma", "must be non-negative and finite"));
        }
        if self.method.is_low_rank() && (self.rank == 0 || self.rank > t.d.min(t.k)) {
            return Err(field_error(
                "rank",
                format!("{} is outside 1..={} for a {}x{} layer", self.rank, t.d.min(t.k), t.d, t.k),
            ));
        }
        if !(self.scaling > 0.0 && self.scaling.is_finite()) {
            return Err(field_error("scaling", "must be positive and finite"));
        }
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(field_error("seeds", "must not repeat a seed"));
        }
        let lr = self.resolved_lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(field_error("lr", "must be non-negative and finite"));
        }
        self.train_config(0)
            .validate()
            .map_err(|e| match e {
                dude_core::Error::InvalidArgument { name, reason } => field_error(name, reason),
                other => CliError::Config(other.to_string()),
            })
    }

    pub fn adapter_config(&self, seed: u64) -> AdapterConfig {
        AdapterConfig::new(self.method, self.rank)
            .with_scaling(self.scaling)
            .with_seed(seed)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch: self.batch,
            base_lr: self.resolved_lr(),
            warmup_frac: self.warmup_frac,
            scheduler: self.scheduler,
            optimizer: self.optimizer,
            seed,
            eval_every: self.eval_every,
            eval_size: self.eval_size,
        }
    }

    pub fn task_seed(&self, run_seed: u64) -> u64 {
        self.task.seed.unwrap_or(run_seed)
    }
}
