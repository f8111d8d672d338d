//! Dense matrices and singular value decomposition.

mod matrix;
mod svd;

pub use matrix::{column_norms, dot, frobenius_norm, matmul, norm, outer, relative_error, Matrix};
pub use svd::{svd, truncate_svd, SvdFactors, TruncatedSvd, MAX_SWEEPS, ORTHOGONALITY_TOL};
