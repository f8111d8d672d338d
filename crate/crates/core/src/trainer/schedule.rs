use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    Cosine,
    Constant,
}

impl Scheduler {
    pub fn lr(self, step: usize, total_steps: usize, warmup_frac: f64, base_lr: f64) -> f64 {
        match self {
            Scheduler::Cosine => cosine_lr(step, total_steps, warmup_frac, base_lr),
            Scheduler::Constant => base_lr,
        }
    }
}

/// Linear warmup from 0 over `ceil(warmup_frac·total_steps)` steps, then
/// half-cosine decay from `base_lr` to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, warmup_frac: f64, base_lr: f64) -> f64 {
    let warmup = (warmup_frac * total_steps as f64).ceil() as usize;
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    let span = total_steps.saturating_sub(warmup);
    if span == 0 || step >= total_steps {
        return 0.0;
    }
    let progress = (step - warmup) as f64 / span as f64;
    base_lr * 0.5 * (1.0 + (PI * progress).cos())
}
