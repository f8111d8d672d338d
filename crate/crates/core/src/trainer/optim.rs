use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    /// Desk-scale default base learning rate.
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 1e-2,
            OptimizerKind::Adam => 1e-3,
        }
    }
}

/// Optimizer hyperparameters and per-parameter moment buffers.
///
/// Buffers are sized on the first step and every later step must present
/// tensors of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::mismatch("optimizer tensors", (params.len(), 1), (grads.len(), 1)));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::mismatch("optimizer tensor", (p.len(), 1), (g.len(), 1)));
            }
        }
        if self.kind == OptimizerKind::Adam {
            if self.step == 0 {
                self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                self.second = self.first.clone();
            } else if self.first.len() != grads.len() || self.first.iter().zip(grads).any(|(b, g)| b.len() != g.len()) {
                return Err(Error::invalid("optimizer state", "tensor shapes changed between steps"));
            }
        }
        self.step += 1;

        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (theta, gi) in p.iter_mut().zip(g.iter()) {
                        *theta -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    for (((theta, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                        *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *theta -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar_step() {
        let mut opt = OptState::new(OptimizerKind::Sgd);
        let mut theta = [1.0];
        opt.step(&mut [&mut theta[..]], &[&[2.0][..]], 0.1).unwrap();
        assert!((theta[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = OptState::new(kind);
            let mut theta = [1.5, -2.0];
            opt.step(&mut [&mut theta[..]], &[&[0.0, 0.0][..]], 0.1).unwrap();
            assert_eq!(theta, [1.5, -2.0]);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = OptState::new(OptimizerKind::Adam);
        let mut theta = [0.0, 0.0];
        opt.step(&mut [&mut theta[..]], &[&[3.0, -0.5][..]], 0.01).unwrap();
        // Bias correction makes the first step lr·g/(|g| + eps) ≈ lr·sign(g).
        assert!((theta[0] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((theta[1] - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = OptState::new(OptimizerKind::Adam);
        let mut theta = [0.0, 0.0];
        assert!(opt.step(&mut [&mut theta[..]], &[&[1.0][..]], 0.1).is_err());
        opt.step(&mut [&mut theta[..]], &[&[1.0, 1.0][..]], 0.1).unwrap();
        let mut other = [0.0; 3];
        assert!(opt.step(&mut [&mut other[..]], &[&[1.0, 1.0, 1.0][..]], 0.1).is_err());
    }
}
