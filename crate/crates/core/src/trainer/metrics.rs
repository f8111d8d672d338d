use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    /// Mean batch loss before the update.
    pub loss: f64,
    /// Global L2 norm over every trainable gradient.
    pub grad_norm: f64,
    pub lr: f64,
    /// Held-out score measured after the update, when scheduled.
    pub eval: Option<f64>,
}

/// Whether a larger eval score is better (accuracy) or worse (held-out loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalGoal {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_loss: f64,
    pub best_eval: Option<f64>,
    pub steps: usize,
    /// Mean loss over the last 10% of steps (at least one).
    pub tail_mean_loss: f64,
}

pub fn summarize(records: &[MetricsRecord], goal: EvalGoal) -> Result<Summary> {
    let Some(last) = records.last() else {
        return Err(Error::invalid("records", "cannot summarize an empty run"));
    };
    let best_eval = records.iter().filter_map(|r| r.eval).reduce(|a, b| match goal {
        EvalGoal::Minimize => a.min(b),
        EvalGoal::Maximize => a.max(b),
    });
    let tail = records.len().div_ceil(10);
    let tail_mean_loss = records[records.len() - tail..].iter().map(|r| r.loss).sum::<f64>() / tail as f64;
    Ok(Summary {
        final_loss: last.loss,
        best_eval,
        steps: records.len(),
        tail_mean_loss,
    })
}
