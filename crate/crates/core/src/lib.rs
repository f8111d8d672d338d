//! Parameter-efficient adaptation of dense linear layers.
//!
//! The crate implements four adaptation schemes over a single `d×k` weight:
//!
//! * **LoRA**: `W' = W₀ + s·BA`, with `B = 0` and Kaiming-uniform `A` at init.
//! * **DoRA**: `W' = m ⊙ (W₀ + s·BA) / ‖W₀ + s·BA‖_c`, a per-column magnitude
//!   vector `m` on top of a LoRA-updated direction.
//! * **PiSSA**: LoRA whose factors start from the top-`r` singular triplets of
//!   `W₀`, with the residual `W_f = W₀ − BA` frozen.
//! * **DuDe**: DoRA's magnitude/direction form with PiSSA's SVD-initialized
//!   factors, in three ways of splitting `Σ_r` between `B` and `A`.
//!
//! Modules:
//!
//! * [`linalg`]: dense matrices and a one-sided Jacobi SVD.
//! * [`adapters`]: initialization, forward evaluation and merging.
//! * [`grad`]: analytic backward passes and a finite-difference oracle.
//! * [`trainer`]: synthetic tasks, optimizers, LR schedule and metrics.

pub mod adapters;
pub mod error;
pub mod grad;
pub mod linalg;
pub mod trainer;

pub use adapters::{AdapterConfig, AdapterState, Method};
pub use error::{Error, Result};
pub use grad::{GradCheckReport, GradientSet, ParamGrads};
pub use linalg::{Matrix, SvdFactors, TruncatedSvd};
