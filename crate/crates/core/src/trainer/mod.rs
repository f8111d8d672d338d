//! Deterministic desk-scale training.
//!
//! A run repeats sample → [`loss_and_grads`] → schedule → optimizer step and
//! logs one [`MetricsRecord`] per step, with a held-out evaluation every
//! `eval_every` steps and after the last one. Given the same task, model and
//! [`TrainConfig`], the record stream is bitwise reproducible.

mod metrics;
mod model;
mod optim;
mod schedule;
mod task;

pub use metrics::{summarize, EvalGoal, MetricsRecord, Summary};
pub use model::{evaluate, loss_and_grads, Layer, LossKind, Model};
pub use optim::{OptState, OptimizerKind};
pub use schedule::{cosine_lr, Scheduler};
pub use task::{make_task, Sample, Target, Task, TaskKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five seeds of the multi-seed robustness suite.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 78, 512, 1234, 3407];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub base_lr: f64,
    pub warmup_frac: f64,
    pub scheduler: Scheduler,
    pub optimizer: OptimizerKind,
    /// Seed of the training-batch stream.
    pub seed: u64,
    pub eval_every: usize,
    pub eval_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch: 32,
            base_lr: OptimizerKind::Adam.default_lr(),
            warmup_frac: 0.03,
            scheduler: Scheduler::Cosine,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            eval_every: 50,
            eval_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch", "must be at least 1"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be non-negative and finite, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::invalid("warmup_frac", format!("must be in [0, 1), got {}", self.warmup_frac)));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every", "must be at least 1"));
        }
        if self.eval_size == 0 {
            return Err(Error::invalid("eval_size", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn eval_goal(loss: LossKind) -> EvalGoal {
    match loss {
        LossKind::Mse => EvalGoal::Minimize,
        LossKind::CrossEntropy => EvalGoal::Maximize,
    }
}

/// Trains `model` in place on `task`.
///
/// Numeric failures abort the run and carry the index of the failing step.
pub fn train(model: &mut Model, task: &Task, cfg: &TrainConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if model.loss_kind() != task.loss_kind() {
        return Err(Error::invalid("model", "loss does not match the task"));
    }
    let at_step = |step: usize| {
        move |e: Error| match e {
            Error::NumericFailure { what, .. } => Error::NumericFailure { step: Some(step), what },
            other => other,
        }
    };

    let mut rng = task.train_stream(cfg.seed);
    let eval_set = task.eval_set(cfg.eval_size);
    let mut opt = OptState::new(cfg.optimizer);
    let mut records = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch = task.batch(&mut rng, cfg.batch);
        let (loss, grads) = loss_and_grads(model, &batch).map_err(at_step(step))?;
        let grad_norm = grads.iter().map(|g| g.squared_norm()).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NumericFailure {
                step: Some(step),
                what: format!("gradient norm is {grad_norm}"),
            });
        }
        let lr = cfg.scheduler.lr(step, cfg.steps, cfg.warmup_frac, cfg.base_lr);
        let grad_slices: Vec<&[f64]> = grads.iter().flat_map(|g| g.as_slices()).collect();
        opt.step(&mut model.trainables_mut(), &grad_slices, lr)?;

        let eval = if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps {
            let score = evaluate(model, &eval_set)?;
            if !score.is_finite() {
                return Err(Error::NumericFailure {
                    step: Some(step),
                    what: format!("eval score is {score}"),
                });
            }
            Some(score)
        } else {
            None
        };
        records.push(MetricsRecord {
            step,
            loss,
            grad_norm,
            lr,
            eval,
        });
    }
    Ok(records)
}
