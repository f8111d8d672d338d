//! Analytic backward passes and a central-difference oracle.
//!
//! For `y = W'x` with upstream gradient `gy`, the weight gradient is
//! `G = gy·xᵀ`. The normalized methods then push `G` through
//! `w'_j = m_j·v_j/n_j`, `n_j = ‖v_j‖ + ε`, one column at a time:
//!
//! ```text
//! dm_j    = ⟨G_j, v_j⟩ / n_j
//! H_j     = (m_j / n_j) · (I − û_j û_jᵀ) · G_j,    û_j = v_j / ‖v_j‖
//! ```
//!
//! `H` is the gradient with respect to `V = base + s·BA`: `G_j` projected
//! onto the orthogonal complement of `v_j`. Differentiating through the
//! `ε`-guarded norm would also keep a sliver `ε/n_j` of the component along
//! `v_j`; it is dropped so the projection holds exactly, at a relative cost
//! of about `ε/n_j` against the true derivative. Because `V` depends on `base` and `BA` only through their sum,
//! `H` is simultaneously the gradient for `W_f` and for `ΔW`, and the factor
//! gradients follow by the chain rule: `dB = s·H·Aᵀ`, `dA = s·Bᵀ·H`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapters::AdapterState;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, outer, Matrix};

/// Gradients of every trainable tensor of one [`AdapterState`].
///
/// A field is `None` exactly when the owning method has no such parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub d_b: Option<Matrix>,
    pub d_a: Option<Matrix>,
    pub d_magnitude: Option<Vec<f64>>,
    /// Only for `full`, where the whole matrix is trained.
    pub d_base: Option<Matrix>,
}

/// Parameter gradients plus the gradient with respect to the layer input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub params: ParamGrads,
    pub d_x: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(state: &AdapterState) -> Self {
        let zeros = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            d_b: state.b().map(zeros),
            d_a: state.a().map(zeros),
            d_magnitude: state.magnitude().map(|m| vec![0.0; m.len()]),
            d_base: (!state.method().is_low_rank()).then(|| zeros(state.base())),
        }
    }

    /// Gradient tensors in the same order as
    /// [`AdapterState::trainables`](crate::adapters::AdapterState::trainables).
    pub fn as_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3);
        if let Some(g) = &self.d_base {
            out.push(g.as_slice());
        }
        if let Some(g) = &self.d_b {
            out.push(g.as_slice());
        }
        if let Some(g) = &self.d_a {
            out.push(g.as_slice());
        }
        if let Some(g) = &self.d_magnitude {
            out.push(g.as_slice());
        }
        out
    }

    pub fn as_mut_slices(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3);
        if let Some(g) = &mut self.d_base {
            out.push(g.as_mut_slice());
        }
        if let Some(g) = &mut self.d_b {
            out.push(g.as_mut_slice());
        }
        if let Some(g) = &mut self.d_a {
            out.push(g.as_mut_slice());
        }
        if let Some(g) = &mut self.d_magnitude {
            out.push(g.as_mut_slice());
        }
        out
    }

    /// Parameter names aligned with [`ParamGrads::as_slices`].
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::with_capacity(3);
        if self.d_base.is_some() {
            out.push("W");
        }
        if self.d_b.is_some() {
            out.push("B");
        }
        if self.d_a.is_some() {
            out.push("A");
        }
        if self.d_magnitude.is_some() {
            out.push("m");
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.as_slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum()
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.as_mut_slices() {
            s.iter_mut().for_each(|g| *g *= alpha);
        }
    }
}

/// Gradient of `L` with respect to `V = base + s·BA` given `G = ∂L/∂W'`.
///
/// For LoRA, PiSSA and full fine-tuning `W' = V`, so this is `G` itself.
pub fn direction_gradient(state: &AdapterState, g: &Matrix) -> Result<Matrix> {
    check_weight_grad(state, g)?;
    let Some(m) = state.magnitude() else {
        return Ok(g.clone());
    };
    let v = state.direction();
    let eps = state.config().norm_epsilon;
    let (d, k) = v.shape();
    let mut h = Matrix::zeros(d, k);
    for j in 0..k {
        let vj = v.column(j);
        let gj = g.column(j);
        let len = norm(&vj);
        let n = len + eps;
        let coeff = m[j] / n;
        if len == 0.0 {
            for i in 0..d {
                h[(i, j)] = coeff * gj[i];
            }
            continue;
        }
        // Project twice so rounding cannot leave a component along û.
        let unit: Vec<f64> = vj.iter().map(|x| x / len).collect();
        let mut perp = gj;
        for _ in 0..2 {
            let along = dot(&unit, &perp);
            for (p, u) in perp.iter_mut().zip(&unit) {
                *p -= along * u;
            }
        }
        for i in 0..d {
            h[(i, j)] = coeff * perp[i];
        }
    }
    Ok(h)
}

/// Parameter gradients from the weight gradient `G = ∂L/∂W'`.
///
/// The trainer accumulates `G` over a batch and calls this once per layer.
pub fn param_grads(state: &AdapterState, g: &Matrix) -> Result<ParamGrads> {
    check_weight_grad(state, g)?;
    let mut out = ParamGrads {
        d_b: None,
        d_a: None,
        d_magnitude: None,
        d_base: None,
    };
    let Some(factors) = state.factors() else {
        out.d_base = Some(g.clone());
        return Ok(out);
    };
    if state.magnitude().is_some() {
        let v = state.direction();
        let denom = state.column_denominators(&v);
        out.d_magnitude = Some(
            (0..v.cols())
                .map(|j| dot(&g.column(j), &v.column(j)) / denom[j])
                .collect(),
        );
    }
    let h = direction_gradient(state, g)?;
    let s = state.config().scaling;
    out.d_b = Some(h.matmul(&factors.a.transpose())?.scale(s));
    out.d_a = Some(factors.b.transpose().matmul(&h)?.scale(s));
    Ok(out)
}

/// Single-sample backward pass for `y = W'x` with `∂L/∂y = gy`.
pub fn backward(state: &AdapterState, x: &[f64], gy: &[f64]) -> Result<GradientSet> {
    let (d, k) = state.shape();
    if x.len() != k {
        return Err(Error::mismatch("backward input", (d, k), (x.len(), 1)));
    }
    if gy.len() != d {
        return Err(Error::mismatch("backward upstream gradient", (d, k), (gy.len(), 1)));
    }
    let g = outer(gy, x);
    let params = param_grads(state, &g)?;
    let d_x = state.effective_weight().t_matvec(gy)?;
    Ok(GradientSet { params, d_x })
}

fn check_weight_grad(state: &AdapterState, g: &Matrix) -> Result<()> {
    if g.shape() != state.shape() {
        return Err(Error::mismatch("weight gradient", g.shape(), state.shape()));
    }
    Ok(())
}

/// Step rule for central differences: `h = relative·(1 + |θ|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdStep {
    pub relative: f64,
}

impl Default for FdStep {
    fn default() -> Self {
        Self { relative: 1e-5 }
    }
}

impl FdStep {
    pub fn for_value(&self, theta: f64) -> f64 {
        self.relative * (1.0 + theta.abs())
    }
}

/// Central-difference gradients of `L = ⟨gy, forward(state, x)⟩`.
///
/// Every trainable scalar is perturbed in place and written back afterwards,
/// so `state` is bit-identical on return.
pub fn finite_diff_grads(state: &mut AdapterState, x: &[f64], gy: &[f64], step: FdStep) -> Result<GradientSet> {
    let loss = |s: &AdapterState, x: &[f64]| -> Result<f64> { Ok(dot(gy, &s.forward(x)?)) };
    // Validates shapes before any perturbation.
    loss(state, x)?;
    if gy.len() != state.shape().0 {
        return Err(Error::mismatch("finite_diff upstream gradient", state.shape(), (gy.len(), 1)));
    }

    let mut params = ParamGrads::zeros_like(state);
    let tensor_count = state.trainables().len();
    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(tensor_count);
    for t in 0..tensor_count {
        let len = state.trainables()[t].len();
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let theta = state.trainables()[t][i];
            let h = step.for_value(theta);
            let (up, down) = (theta + h, theta - h);
            state.trainables_mut()[t][i] = up;
            let l_up = loss(state, x)?;
            state.trainables_mut()[t][i] = down;
            let l_down = loss(state, x)?;
            state.trainables_mut()[t][i] = theta;
            out.push((l_up - l_down) / (up - down));
        }
        numeric.push(out);
    }
    for (dst, src) in params.as_mut_slices().into_iter().zip(&numeric) {
        dst.copy_from_slice(src);
    }

    let mut xs = x.to_vec();
    let mut d_x = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = xs[i];
        let h = step.for_value(xi);
        let (up, down) = (xi + h, xi - h);
        xs[i] = up;
        let l_up = loss(state, &xs)?;
        xs[i] = down;
        let l_down = loss(state, &xs)?;
        xs[i] = xi;
        d_x.push((l_up - l_down) / (up - down));
    }
    Ok(GradientSet { params, d_x })
}

/// Max relative error of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: &'static str,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub errors: Vec<ParamError>,
    pub pass: bool,
    /// Relative finite-difference step (`h = fd_step·(1 + |θ|)`).
    pub fd_step: f64,
    pub tolerance: f64,
}

pub const DEFAULT_GRADCHECK_TOLERANCE: f64 = 1e-5;

/// `|a − f| / max(1, |a|, |f|)`.
pub fn entry_relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &f)| entry_relative_error(a, f))
        .fold(0.0, f64::max)
}

impl GradCheckReport {
    /// Compares two gradient sets entry by entry. A layout mismatch between
    /// them counts as an infinite error.
    pub fn compare(analytic: &GradientSet, numeric: &GradientSet, fd_step: f64, tolerance: f64) -> Self {
        let mut errors: Vec<ParamError> = Vec::new();
        let names = analytic.params.names();
        let a = analytic.params.as_slices();
        let f = numeric.params.as_slices();
        if names != numeric.params.names() {
            errors.push(ParamError {
                name: "layout",
                max_relative_error: f64::INFINITY,
            });
        } else {
            for ((name, a), f) in names.into_iter().zip(a).zip(f) {
                errors.push(ParamError {
                    name,
                    max_relative_error: if a.len() == f.len() { max_relative_error(a, f) } else { f64::INFINITY },
                });
            }
        }
        errors.push(ParamError {
            name: "x",
            max_relative_error: if analytic.d_x.len() == numeric.d_x.len() {
                max_relative_error(&analytic.d_x, &numeric.d_x)
            } else {
                f64::INFINITY
            },
        });
        // NaN compares false, so a NaN error also fails.
        let pass = errors.iter().all(|e| e.max_relative_error <= tolerance);
        Self {
            errors,
            pass,
            fd_step,
            tolerance,
        }
    }

    pub fn worst(&self) -> f64 {
        self.errors.iter().map(|e| e.max_relative_error).fold(0.0, f64::max)
    }
}

/// Checks [`backward`] against [`finite_diff_grads`] on a seeded random
/// `(x, gy)` with entries uniform on `[-1, 1]`.
pub fn grad_check(state: &AdapterState, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::invalid("tolerance", format!("must be positive, got {tolerance}")));
    }
    let (d, k) = state.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let gy: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();

    let y = state.forward(&x)?;
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            step: None,
            what: format!("forward produced {bad}"),
        });
    }
    let analytic = backward(state, &x, &gy)?;
    let mut scratch = state.clone();
    let step = FdStep::default();
    let numeric = finite_diff_grads(&mut scratch, &x, &gy, step)?;
    Ok(GradCheckReport::compare(&analytic, &numeric, step.relative, tolerance))
}
