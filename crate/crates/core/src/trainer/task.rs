//! Synthetic desk-scale tasks.
//!
//! `teacher_student` draws `x ~ N(0, I_k)` and `y = W_t·x + σ·noise`, where
//! `W_t = W₀ + U′·diag(S′)·V′ᵀ` differs from the "pre-trained" weight `W₀` by
//! a rank-`r_true` perturbation with random orthonormal `U′`, `V′` and
//! `S′ ~ U[0.5, 1.5]`. `W₀` has entries `N(0, 1/k)`.
//!
//! `cluster_classify` has `d` classes, each a Gaussian cluster in `ℝ^k` with
//! a standard-normal center and spread `σ`. `r_true` is unused there.
//!
//! Randomness is split into ChaCha streams: stream 0 of the task seed builds
//! the task, stream 2 of the task seed draws the held-out set, and training
//! batches come from stream 1 of the *training* seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::trainer::model::LossKind;

const BUILD_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TeacherStudent,
    ClusterClassify,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::TeacherStudent => "teacher_student",
            TaskKind::ClusterClassify => "cluster_classify",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher_student" => Ok(TaskKind::TeacherStudent),
            "cluster_classify" => Ok(TaskKind::ClusterClassify),
            other => Err(Error::invalid(
                "task kind",
                format!("unknown task `{other}`, expected teacher_student or cluster_classify"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Regression(Vec<f64>),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub target: Target,
}

#[derive(Debug, Clone)]
pub struct Task {
    kind: TaskKind,
    seed: u64,
    sigma: f64,
    r_true: usize,
    base: Matrix,
    teacher: Option<Matrix>,
    centers: Option<Matrix>,
}

pub fn make_task(kind: TaskKind, d: usize, k: usize, r_true: usize, sigma: f64, seed: u64) -> Result<Task> {
    if d == 0 || k == 0 {
        return Err(Error::invalid("task dims", format!("d and k must be positive, got d={d}, k={k}")));
    }
    if r_true > d.min(k) {
        return Err(Error::invalid(
            "r_true",
            format!("must be at most min(d, k) = {}, got {r_true}", d.min(k)),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("must be non-negative and finite, got {sigma}")));
    }

    let mut rng = stream(seed, BUILD_STREAM);
    let scale = 1.0 / (k as f64).sqrt();
    let base = gaussian(&mut rng, d, k, scale);

    let (teacher, centers) = match kind {
        TaskKind::TeacherStudent => {
            let mut teacher = base.clone();
            if r_true > 0 {
                let left = orthonormal_columns(&mut rng, d, r_true)?;
                let right = orthonormal_columns(&mut rng, k, r_true)?;
                let spectrum: Vec<f64> = (0..r_true).map(|_| rng.random_range(0.5..=1.5)).collect();
                let perturbation = left.scale_columns(&spectrum)?.matmul(&right.transpose())?;
                teacher = teacher.add(&perturbation)?;
            }
            (Some(teacher), None)
        }
        TaskKind::ClusterClassify => (None, Some(gaussian(&mut rng, d, k, 1.0))),
    };

    Ok(Task {
        kind,
        seed,
        sigma,
        r_true,
        base,
        teacher,
        centers,
    })
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn r_true(&self) -> usize {
        self.r_true
    }

    /// `(d, k)`: output and input widths.
    pub fn dims(&self) -> (usize, usize) {
        self.base.shape()
    }

    /// The "pre-trained" weight adapters start from.
    pub fn base(&self) -> &Matrix {
        &self.base
    }

    /// `W_t` for teacher-student tasks.
    pub fn teacher(&self) -> Option<&Matrix> {
        self.teacher.as_ref()
    }

    /// Class centers (one per row) for classification tasks.
    pub fn centers(&self) -> Option<&Matrix> {
        self.centers.as_ref()
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.kind {
            TaskKind::TeacherStudent => LossKind::Mse,
            TaskKind::ClusterClassify => LossKind::CrossEntropy,
        }
    }

    pub fn train_stream(&self, train_seed: u64) -> ChaCha8Rng {
        stream(train_seed, TRAIN_STREAM)
    }

    /// Held-out samples; always the same for a given task.
    pub fn eval_set(&self, n: usize) -> Vec<Sample> {
        let mut rng = stream(self.seed, EVAL_STREAM);
        self.batch(&mut rng, n)
    }

    pub fn batch(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Sample {
        let (d, k) = self.dims();
        match (&self.teacher, &self.centers) {
            (Some(teacher), _) => {
                let x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                let mut y = teacher.matvec(&x).expect("teacher is d×k");
                for yi in &mut y {
                    let noise: f64 = rng.sample(StandardNormal);
                    *yi += self.sigma * noise;
                }
                Sample {
                    x,
                    target: Target::Regression(y),
                }
            }
            (None, Some(centers)) => {
                let class = rng.random_range(0..d);
                let x = centers
                    .row(class)
                    .iter()
                    .map(|c| {
                        let noise: f64 = rng.sample(StandardNormal);
                        c + self.sigma * noise
                    })
                    .collect();
                Sample {
                    x,
                    target: Target::Class(class),
                }
            }
            (None, None) => unreachable!("every task kind carries a teacher or centers"),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    })
}

/// `n×r` matrix with orthonormal columns spanning a random subspace.
fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Result<Matrix> {
    let g = gaussian(rng, n, r, 1.0);
    Ok(svd(&g)?.u().clone())
}
