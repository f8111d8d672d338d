//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The input is transposed when it is wider than tall so the rotations always
//! act on the `p = min(d, k)` columns of a tall matrix. Sweeps repeat until
//! every column pair satisfies `|g_ij| <= 1e-12 * sqrt(g_ii * g_jj)` on the
//! Gram matrix, or the sweep cap is hit.
//!
//! Output is canonicalized so the result is a pure function of the input:
//! singular values are sorted descending (stable on the original column
//! index), and every triplet is sign-flipped so the largest-magnitude entry of
//! `u_i` is positive (lowest row index wins a tie).

use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Maximum number of Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Relative off-diagonal threshold for declaring a column pair orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Thin SVD `W = U·diag(sigma)·Vᵀ` with `U: d×p`, `V: k×p`, `p = min(d, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

/// The leading `r` singular triplets of an [`SvdFactors`].
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

impl SvdFactors {
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn rank_limit(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        reconstruct(&self.u, &self.sigma, &self.v)
    }

    pub fn truncate(&self, r: usize) -> Result<TruncatedSvd> {
        truncate_svd(self, r)
    }
}

impl TruncatedSvd {
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U_r·diag(sigma_r)·V_rᵀ`, the best rank-`r` approximation.
    pub fn reconstruct(&self) -> Matrix {
        reconstruct(&self.u, &self.sigma, &self.v)
    }
}

fn reconstruct(u: &Matrix, sigma: &[f64], v: &Matrix) -> Matrix {
    let us = u.scale_columns(sigma).expect("sigma length matches U columns");
    us.matmul(&v.transpose()).expect("U and V share the inner dimension")
}

pub fn svd(w: &Matrix) -> Result<SvdFactors> {
    let transposed = w.rows() < w.cols();
    let tall = if transposed { w.transpose() } else { w.clone() };
    let (m, n) = tall.shape();

    // Column-major working copies: `cols` converges to U·Σ, `rot` accumulates V.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| tall.column(j)).collect();
    let mut rot: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n == 1;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma.abs() <= ORTHOGONALITY_TOL * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_pair(&mut cols, i, j, c, s);
                rotate_pair(&mut rot, i, j, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            residual: max_relative_off_diagonal(&cols),
        });
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal values keep ascending original index.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut left: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            let s = norms[j];
            (s > f64::MIN_POSITIVE).then(|| cols[j].iter().map(|v| v / s).collect())
        })
        .collect();
    complete_orthonormal(&mut left, m);
    let left: Vec<Vec<f64>> = left.into_iter().map(|c| c.expect("completed")).collect();
    let right: Vec<Vec<f64>> = order.iter().map(|&j| rot[j].clone()).collect();

    // Undo the internal transpose: Wᵀ = U'ΣV'ᵀ  =>  W = V'ΣU'ᵀ.
    let (mut u_cols, mut v_cols) = if transposed { (right, left) } else { (left, right) };

    for (u, v) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut pivot = 0;
        for (idx, val) in u.iter().enumerate() {
            if val.abs() > u[pivot].abs() {
                pivot = idx;
            }
        }
        if u[pivot] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdFactors {
        u: from_columns(&u_cols, w.rows()),
        sigma,
        v: from_columns(&v_cols, w.cols()),
    })
}

/// Keeps the leading `r` triplets.
pub fn truncate_svd(f: &SvdFactors, r: usize) -> Result<TruncatedSvd> {
    let p = f.sigma.len();
    if r == 0 || r > p {
        return Err(Error::RankOutOfRange { rank: r, max: p });
    }
    let take = |m: &Matrix| Matrix::from_fn(m.rows(), r, |i, j| m[(i, j)]);
    Ok(TruncatedSvd {
        u: take(&f.u),
        sigma: f.sigma[..r].to_vec(),
        v: take(&f.v),
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(j);
    let (ci, cj) = (&mut head[i], &mut tail[0]);
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

fn max_relative_off_diagonal(cols: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let scale = norm(&cols[i]) * norm(&cols[j]);
            if scale > 0.0 {
                worst = worst.max(dot(&cols[i], &cols[j]).abs() / scale);
            }
        }
    }
    worst
}

/// Fills the `None` slots (columns with zero singular value) with unit vectors
/// orthogonal to every other column, drawn from the standard basis in order.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    let mut candidate = 0;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // Two passes of modified Gram-Schmidt.
            for _ in 0..2 {
                for q in cols.iter().flatten() {
                    let proj = dot(q, &e);
                    e.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
                }
            }
            let len = norm(&e);
            if len > 0.5 {
                e.iter_mut().for_each(|x| *x /= len);
                cols[slot] = Some(e);
                break;
            }
        }
    }
}

fn from_columns(cols: &[Vec<f64>], rows: usize) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}
