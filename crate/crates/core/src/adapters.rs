//! Adapter construction, forward evaluation and merging.
//!
//! Every method wraps one `d×k` dense layer. The effective weight is
//!
//! * `full`: the trainable matrix itself,
//! * `lora`, `pissa`: `base + s·BA`,
//! * `dora`, `dude`, `dude_a`, `dude_b`: column `j` is `m_j·v_j / (‖v_j‖ + ε)`
//!   where `V = base + s·BA`.
//!
//! `base` is `W₀` for LoRA/DoRA and the SVD residual `W_f = W₀ − BA` for the
//! SVD-initialized methods. In both cases it is frozen; only `B`, `A` and `m`
//! are trainable (or the whole matrix for `full`).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms, svd, Matrix, TruncatedSvd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Full,
    Lora,
    Dora,
    Pissa,
    Dude,
    DudeA,
    DudeB,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Full,
        Method::Lora,
        Method::Dora,
        Method::Pissa,
        Method::Dude,
        Method::DudeA,
        Method::DudeB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Lora => "lora",
            Method::Dora => "dora",
            Method::Pissa => "pissa",
            Method::Dude => "dude",
            Method::DudeA => "dude_a",
            Method::DudeB => "dude_b",
        }
    }

    /// Whether the method carries a trainable magnitude vector.
    pub fn has_magnitude(self) -> bool {
        matches!(self, Method::Dora | Method::Dude | Method::DudeA | Method::DudeB)
    }

    /// Whether the method trains low-rank factors over a frozen base.
    pub fn is_low_rank(self) -> bool {
        self != Method::Full
    }

    pub fn is_dude(self) -> bool {
        matches!(self, Method::Dude | Method::DudeA | Method::DudeB)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::invalid("method", format!("unknown method `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub method: Method,
    /// Ignored by `full`.
    pub rank: usize,
    /// Multiplier on `BA`. LoRA's usual `alpha / r` would go here.
    pub scaling: f64,
    /// Added to every column-norm denominator.
    pub norm_epsilon: f64,
    /// Seed for the Kaiming-uniform draw of `A` (LoRA and DoRA only).
    pub seed: u64,
}

impl AdapterConfig {
    pub const DEFAULT_SCALING: f64 = 1.0;
    pub const DEFAULT_NORM_EPSILON: f64 = 1e-12;

    pub fn new(method: Method, rank: usize) -> Self {
        Self {
            method,
            rank,
            scaling: Self::DEFAULT_SCALING,
            norm_epsilon: Self::DEFAULT_NORM_EPSILON,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scaling(mut self, scaling: f64) -> Self {
        self.scaling = scaling;
        self
    }

    fn validate(&self, d: usize, k: usize) -> Result<()> {
        if !(self.scaling > 0.0 && self.scaling.is_finite()) {
            return Err(Error::invalid("scaling", format!("must be positive and finite, got {}", self.scaling)));
        }
        if !(self.norm_epsilon >= 0.0 && self.norm_epsilon.is_finite()) {
            return Err(Error::invalid(
                "norm_epsilon",
                format!("must be non-negative and finite, got {}", self.norm_epsilon),
            ));
        }
        let max = d.min(k);
        if self.method.is_low_rank() && (self.rank == 0 || self.rank > max) {
            return Err(Error::RankOutOfRange { rank: self.rank, max });
        }
        Ok(())
    }
}

/// Low-rank update factors `B: d×r`, `A: r×k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    pub b: Matrix,
    pub a: Matrix,
}

/// One adapted linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    method: Method,
    base: Matrix,
    factors: Option<LowRank>,
    magnitude: Option<Vec<f64>>,
    config: AdapterConfig,
}

impl AdapterState {
    /// Initializes `w0` with whatever scheme `cfg.method` names.
    pub fn init(w0: &Matrix, cfg: &AdapterConfig) -> Result<Self> {
        match cfg.method {
            Method::Full => init_full(w0, cfg),
            Method::Lora => init_lora(w0, cfg),
            Method::Dora => init_dora(w0, cfg),
            Method::Pissa => init_pissa(w0, cfg),
            Method::Dude | Method::DudeA | Method::DudeB => init_dude(w0, cfg),
        }
    }

    /// Assembles a state from explicit parts, checking that shapes and the
    /// presence of factors/magnitude agree with `config.method`.
    pub fn from_parts(
        base: Matrix,
        factors: Option<LowRank>,
        magnitude: Option<Vec<f64>>,
        config: AdapterConfig,
    ) -> Result<Self> {
        let (d, k) = base.shape();
        let method = config.method;
        config.validate(d, k)?;
        match (&factors, method.is_low_rank()) {
            (Some(f), true) => {
                let r = config.rank;
                if f.b.shape() != (d, r) {
                    return Err(Error::mismatch("adapter B", f.b.shape(), (d, r)));
                }
                if f.a.shape() != (r, k) {
                    return Err(Error::mismatch("adapter A", f.a.shape(), (r, k)));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::invalid("factors", "full method has no low-rank factors")),
            (None, true) => return Err(Error::invalid("factors", format!("{method} requires B and A"))),
        }
        match (&magnitude, method.has_magnitude()) {
            (Some(m), true) if m.len() != k => {
                return Err(Error::mismatch("adapter magnitude", (m.len(), 1), (k, 1)))
            }
            (Some(m), true) if m.iter().any(|v| !v.is_finite()) => {
                return Err(Error::invalid("magnitude", "entries must be finite"))
            }
            (Some(_), true) | (None, false) => {}
            (Some(_), false) => return Err(Error::invalid("magnitude", format!("{method} has no magnitude vector"))),
            (None, true) => return Err(Error::invalid("magnitude", format!("{method} requires a magnitude vector"))),
        }
        Ok(Self {
            method,
            base,
            factors,
            magnitude,
            config,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn factors(&self) -> Option<&LowRank> {
        self.factors.as_ref()
    }

    pub fn b(&self) -> Option<&Matrix> {
        self.factors.as_ref().map(|f| &f.b)
    }

    pub fn a(&self) -> Option<&Matrix> {
        self.factors.as_ref().map(|f| &f.a)
    }

    pub fn magnitude(&self) -> Option<&[f64]> {
        self.magnitude.as_deref()
    }

    /// Output and input widths `(d, k)`.
    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    /// `s·BA`, or `None` for `full`.
    pub fn delta(&self) -> Option<Matrix> {
        self.factors
            .as_ref()
            .map(|f| f.b.matmul(&f.a).expect("factor shapes checked at construction").scale(self.config.scaling))
    }

    /// The unnormalized direction `V = base + s·BA` (just `base` for `full`).
    pub fn direction(&self) -> Matrix {
        match self.delta() {
            Some(delta) => self.base.add(&delta).expect("delta matches base shape"),
            None => self.base.clone(),
        }
    }

    /// Per-column denominators `‖v_j‖ + ε` of the normalized form.
    pub fn column_denominators(&self, direction: &Matrix) -> Vec<f64> {
        column_norms(direction)
            .into_iter()
            .map(|n| n + self.config.norm_epsilon)
            .collect()
    }

    pub fn effective_weight(&self) -> Matrix {
        let v = self.direction();
        match &self.magnitude {
            Some(m) => {
                let scale: Vec<f64> = m
                    .iter()
                    .zip(self.column_denominators(&v))
                    .map(|(mj, nj)| mj / nj)
                    .collect();
                v.scale_columns(&scale).expect("magnitude length checked at construction")
            }
            None => v,
        }
    }

    /// `y = W'·x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let k = self.base.cols();
        if x.len() != k {
            return Err(Error::mismatch("forward", self.shape(), (x.len(), 1)));
        }
        self.effective_weight().matvec(x)
    }

    /// Collapses the adapter into one dense weight for inference.
    pub fn merge(&self) -> Matrix {
        self.effective_weight()
    }

    /// Mutable views of the trainable tensors, in the order
    /// `[base]` for `full`, otherwise `[B, A]` followed by `m` when present.
    pub fn trainables_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3);
        match &mut self.factors {
            None => out.push(self.base.as_mut_slice()),
            Some(f) => {
                out.push(f.b.as_mut_slice());
                out.push(f.a.as_mut_slice());
            }
        }
        if let Some(m) = &mut self.magnitude {
            out.push(m.as_mut_slice());
        }
        out
    }

    /// Read-only counterpart of [`AdapterState::trainables_mut`].
    pub fn trainables(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3);
        match &self.factors {
            None => out.push(self.base.as_slice()),
            Some(f) => {
                out.push(f.b.as_slice());
                out.push(f.a.as_slice());
            }
        }
        if let Some(m) = &self.magnitude {
            out.push(m.as_slice());
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainables().iter().map(|t| t.len()).sum()
    }

    /// Moves every trainable off its initial value: additive uniform noise in
    /// `[-scale, scale]` for matrices, a multiplicative `1 + noise` factor for
    /// `m` (clamped to stay positive). Gradient checks use this so that, e.g.,
    /// LoRA's `B = 0` start does not zero out `dA`.
    pub fn jitter_trainables(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let has_m = self.magnitude.is_some();
        let mut params = self.trainables_mut();
        let m_slot = if has_m { params.pop() } else { None };
        for p in params {
            for v in p.iter_mut() {
                *v += rng.random_range(-scale..=scale);
            }
        }
        if let Some(m) = m_slot {
            for v in m.iter_mut() {
                *v *= (1.0 + rng.random_range(-scale..=scale)).max(0.1);
            }
        }
    }
}

/// `rows×cols` matrix with entries i.i.d. uniform on `[-1/√fan_in, 1/√fan_in]`.
pub fn kaiming_uniform(rows: usize, cols: usize, fan_in: usize, seed: u64) -> Matrix {
    assert!(fan_in >= 1, "fan_in must be at least 1");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

fn expect_method(cfg: &AdapterConfig, expected: &'static str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::MethodMismatch {
            expected,
            found: cfg.method.as_str(),
        })
    }
}

/// Magnitude at init: the column norms of `w0`, with zero norms replaced by
/// `norm_epsilon` so every entry is positive.
fn initial_magnitude(w0: &Matrix, eps: f64) -> Vec<f64> {
    column_norms(w0)
        .into_iter()
        .map(|n| if n > 0.0 { n } else { eps })
        .collect()
}

pub fn init_full(w0: &Matrix, cfg: &AdapterConfig) -> Result<AdapterState> {
    expect_method(cfg, "full", cfg.method == Method::Full)?;
    AdapterState::from_parts(w0.clone(), None, None, *cfg)
}

/// LoRA: `B = 0`, `A` Kaiming-uniform with `fan_in = k`.
pub fn init_lora(w0: &Matrix, cfg: &AdapterConfig) -> Result<AdapterState> {
    expect_method(cfg, "lora", cfg.method == Method::Lora)?;
    let factors = zero_b_factors(w0, cfg)?;
    AdapterState::from_parts(w0.clone(), Some(factors), None, *cfg)
}

/// DoRA: LoRA factors plus `m = ‖W₀‖_c`.
pub fn init_dora(w0: &Matrix, cfg: &AdapterConfig) -> Result<AdapterState> {
    expect_method(cfg, "dora", cfg.method == Method::Dora)?;
    let factors = zero_b_factors(w0, cfg)?;
    let m = initial_magnitude(w0, cfg.norm_epsilon);
    AdapterState::from_parts(w0.clone(), Some(factors), Some(m), *cfg)
}

/// PiSSA: `B = U_r√Σ_r`, `A = √Σ_r V_rᵀ`, `base = W₀ − s·BA`.
pub fn init_pissa(w0: &Matrix, cfg: &AdapterConfig) -> Result<AdapterState> {
    expect_method(cfg, "pissa", cfg.method == Method::Pissa)?;
    cfg.validate(w0.rows(), w0.cols())?;
    let top = svd(w0)?.truncate(cfg.rank)?;
    let factors = split_singular_values(&top, Method::Pissa, cfg.scaling);
    let base = residual(w0, &factors, cfg.scaling);
    AdapterState::from_parts(base, Some(factors), None, *cfg)
}

/// DuDe and its two variants. They differ only in how `Σ_r` is split:
///
/// * `dude`: `B = U_r√Σ_r`, `A = √Σ_r V_rᵀ`
/// * `dude_a`: `B = U_r`, `A = Σ_r V_rᵀ`
/// * `dude_b`: `B = U_rΣ_r`, `A = V_rᵀ`
///
/// In every case `base = W₀ − s·BA` and `m = ‖W₀‖_c`.
pub fn init_dude(w0: &Matrix, cfg: &AdapterConfig) -> Result<AdapterState> {
    expect_method(cfg, "dude", cfg.method.is_dude())?;
    cfg.validate(w0.rows(), w0.cols())?;
    let top = svd(w0)?.truncate(cfg.rank)?;
    let factors = split_singular_values(&top, cfg.method, cfg.scaling);
    let base = residual(w0, &factors, cfg.scaling);
    let m = initial_magnitude(w0, cfg.norm_epsilon);
    AdapterState::from_parts(base, Some(factors), Some(m), *cfg)
}

fn zero_b_factors(w0: &Matrix, cfg: &AdapterConfig) -> Result<LowRank> {
    let (d, k) = w0.shape();
    cfg.validate(d, k)?;
    Ok(LowRank {
        b: Matrix::zeros(d, cfg.rank),
        a: kaiming_uniform(cfg.rank, k, k, cfg.seed),
    })
}

/// Splits `U_rΣ_rV_rᵀ / s` into `B·A`. Dividing by the scaling keeps
/// `s·BA = U_rΣ_rV_rᵀ` exactly.
fn split_singular_values(top: &TruncatedSvd, method: Method, scaling: f64) -> LowRank {
    let sigma: Vec<f64> = top.sigma().iter().map(|s| s / scaling).collect();
    let root: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let ones = vec![1.0; sigma.len()];
    let (b_scale, a_scale) = match method {
        Method::DudeA => (&ones, &sigma),
        Method::DudeB => (&sigma, &ones),
        _ => (&root, &root),
    };
    let b = top.u().scale_columns(b_scale).expect("rank-r scale");
    let a = top.v().transpose().scale_rows(a_scale).expect("rank-r scale");
    LowRank { b, a }
}

fn residual(w0: &Matrix, factors: &LowRank, scaling: f64) -> Matrix {
    let ba = factors.b.matmul(&factors.a).expect("rank-r factors");
    w0.add_scaled(-scaling, &ba).expect("residual shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_error;

    fn diag32() -> Matrix {
        Matrix::from_diag(&[3.0, 2.0])
    }

    fn approx_eq(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.sub(b).unwrap().max_abs() <= tol
    }

    fn sample_w0() -> Matrix {
        Matrix::from_fn(5, 4, |i, j| ((i * 4 + j) as f64 * 0.91 + 0.3).sin())
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        let err = "qlora".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("method"), "{err}");
    }

    #[test]
    fn kaiming_uniform_bound_and_determinism() {
        let a = kaiming_uniform(8, 16, 16, 7);
        assert!(a.max_abs() <= 0.25);
        assert_eq!(a, kaiming_uniform(8, 16, 16, 7));
        assert_ne!(a, kaiming_uniform(8, 16, 16, 8));
    }

    #[test]
    fn kaiming_uniform_sample_mean() {
        let fan_in = 9;
        let bound = 1.0 / 3.0;
        let draws = kaiming_uniform(100, 100, fan_in, 1234);
        let mean = draws.as_slice().iter().sum::<f64>() / 1e4;
        // std of the mean = (bound/√3)/√n
        assert!(mean.abs() <= 3.0 * bound / (3.0 * 1e4f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn lora_init() {
        let w0 = sample_w0();
        let s = init_lora(&w0, &AdapterConfig::new(Method::Lora, 2).with_seed(3)).unwrap();
        assert_eq!(s.effective_weight(), w0);
        assert_eq!(s.b().unwrap(), &Matrix::zeros(5, 2));
        assert!(s.a().unwrap().max_abs() <= 1.0 / 2.0);
        assert!(s.magnitude().is_none());
    }

    #[test]
    fn dora_init() {
        let w0 = sample_w0();
        let s = init_dora(&w0, &AdapterConfig::new(Method::Dora, 2)).unwrap();
        assert!(relative_error(&s.effective_weight(), &w0).unwrap() <= 1e-10);

        let s = init_dora(&diag32(), &AdapterConfig::new(Method::Dora, 1)).unwrap();
        assert_eq!(s.magnitude().unwrap(), &[3.0, 2.0]);
    }

    #[test]
    fn dora_zero_column_uses_epsilon() {
        let w0 = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap();
        let s = init_dora(&w0, &AdapterConfig::new(Method::Dora, 1)).unwrap();
        assert_eq!(s.magnitude().unwrap()[1], 1e-12);
        let w = s.effective_weight();
        assert_eq!(w.column(1), vec![0.0, 0.0]);
        assert!(relative_error(&w, &w0).unwrap() <= 1e-10);
    }

    #[test]
    fn pissa_init_on_diagonal() {
        let s = init_pissa(&diag32(), &AdapterConfig::new(Method::Pissa, 1)).unwrap();
        let r3 = 3f64.sqrt();
        assert!(approx_eq(s.b().unwrap(), &Matrix::from_rows(&[[r3], [0.0]]).unwrap(), 1e-15));
        assert!(approx_eq(s.a().unwrap(), &Matrix::from_rows(&[[r3, 0.0]]).unwrap(), 1e-15));
        assert!(approx_eq(s.base(), &Matrix::from_diag(&[0.0, 2.0]), 1e-15));
    }

    #[test]
    fn pissa_residual_is_second_singular_value() {
        let w0 = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let s = init_pissa(&w0, &AdapterConfig::new(Method::Pissa, 1)).unwrap();
        let sigma2 = (15.0 - 221f64.sqrt()).sqrt();
        assert!((s.base().frobenius_norm() - sigma2).abs() < 1e-12);
        let recon = s.base().add(&s.delta().unwrap()).unwrap();
        assert!(relative_error(&recon, &w0).unwrap() <= 1e-10);
    }

    #[test]
    fn dude_variants_on_diagonal() {
        let r3 = 3f64.sqrt();
        let cases = [
            (Method::Dude, [r3, 0.0], [r3, 0.0]),
            (Method::DudeA, [1.0, 0.0], [3.0, 0.0]),
            (Method::DudeB, [3.0, 0.0], [1.0, 0.0]),
        ];
        for (method, b, a) in cases {
            let s = init_dude(&diag32(), &AdapterConfig::new(method, 1)).unwrap();
            let b_expected = Matrix::new(2, 1, b.to_vec()).unwrap();
            let a_expected = Matrix::new(1, 2, a.to_vec()).unwrap();
            assert!(approx_eq(s.b().unwrap(), &b_expected, 1e-15), "{method}");
            assert!(approx_eq(s.a().unwrap(), &a_expected, 1e-15), "{method}");
            assert!(approx_eq(&s.delta().unwrap(), &Matrix::from_diag(&[3.0, 0.0]), 1e-14));
            assert!(approx_eq(s.base(), &Matrix::from_diag(&[0.0, 2.0]), 1e-14));
            assert_eq!(s.magnitude().unwrap(), &[3.0, 2.0]);
            assert!(approx_eq(&s.effective_weight(), &diag32(), 1e-11));
        }
    }

    #[test]
    fn every_method_starts_at_w0() {
        let w0 = sample_w0();
        for method in Method::ALL {
            for rank in 1..=4 {
                let s = AdapterState::init(&w0, &AdapterConfig::new(method, rank)).unwrap();
                let err = relative_error(&s.effective_weight(), &w0).unwrap();
                assert!(err <= 1e-10, "{method} r={rank}: {err}");
            }
        }
    }

    #[test]
    fn scaling_is_absorbed_by_svd_split() {
        let w0 = sample_w0();
        let cfg = AdapterConfig::new(Method::Dude, 2).with_scaling(4.0);
        let s = AdapterState::init(&w0, &cfg).unwrap();
        let top = svd(&w0).unwrap().truncate(2).unwrap().reconstruct();
        assert!(approx_eq(&s.delta().unwrap(), &top, 1e-12));
        assert!(relative_error(&s.effective_weight(), &w0).unwrap() <= 1e-10);
    }

    #[test]
    fn rank_and_method_errors() {
        let w0 = sample_w0();
        for method in [Method::Lora, Method::Dora, Method::Pissa, Method::Dude] {
            assert_eq!(
                AdapterState::init(&w0, &AdapterConfig::new(method, 5)).unwrap_err(),
                Error::RankOutOfRange { rank: 5, max: 4 }
            );
            assert!(AdapterState::init(&w0, &AdapterConfig::new(method, 0)).is_err());
        }
        // full ignores the rank
        assert!(AdapterState::init(&w0, &AdapterConfig::new(Method::Full, 99)).is_ok());
        assert!(matches!(
            init_lora(&w0, &AdapterConfig::new(Method::Dora, 1)),
            Err(Error::MethodMismatch { .. })
        ));
        assert!(AdapterState::init(&w0, &AdapterConfig::new(Method::Lora, 1).with_scaling(0.0)).is_err());
    }

    #[test]
    fn column_scaling_leaves_normalized_weight_unchanged() {
        let w0 = sample_w0();
        let s = AdapterState::init(&w0, &AdapterConfig::new(Method::Dude, 2)).unwrap();
        // Scaling base and A by 7 scales every column of V = base + BA by 7.
        let f = s.factors().unwrap();
        let scaled = AdapterState::from_parts(
            s.base().scale(7.0),
            Some(LowRank {
                b: f.b.clone(),
                a: f.a.scale(7.0),
            }),
            s.magnitude().map(<[f64]>::to_vec),
            *s.config(),
        )
        .unwrap();
        assert!(approx_eq(&scaled.effective_weight(), &s.effective_weight(), 1e-9));
    }

    #[test]
    fn lora_outer_product_of_ones() {
        let cfg = AdapterConfig::new(Method::Lora, 1);
        let s = AdapterState::from_parts(
            Matrix::zeros(3, 2),
            Some(LowRank {
                b: Matrix::from_fn(3, 1, |_, _| 1.0),
                a: Matrix::from_fn(1, 2, |_, _| 1.0),
            }),
            None,
            cfg,
        )
        .unwrap();
        assert_eq!(s.effective_weight().as_slice(), &[1.0; 6]);
    }

    #[test]
    fn forward_examples() {
        let s = AdapterState::init(&diag32(), &AdapterConfig::new(Method::Lora, 1)).unwrap();
        assert_eq!(s.forward(&[1.0, 1.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(s.forward(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let id = AdapterState::init(&Matrix::identity(3), &AdapterConfig::new(Method::Full, 1)).unwrap();
        assert_eq!(id.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(s.forward(&[1.0]).is_err());
    }

    #[test]
    fn from_parts_rejects_inconsistent_layouts() {
        let cfg = AdapterConfig::new(Method::Dora, 1);
        let f = LowRank {
            b: Matrix::zeros(2, 1),
            a: Matrix::zeros(1, 2),
        };
        assert!(AdapterState::from_parts(Matrix::zeros(2, 2), Some(f.clone()), None, cfg).is_err());
        assert!(AdapterState::from_parts(Matrix::zeros(2, 2), Some(f.clone()), Some(vec![1.0]), cfg).is_err());
        assert!(AdapterState::from_parts(Matrix::zeros(2, 2), Some(f), Some(vec![1.0, 1.0]), cfg).is_ok());
        assert!(AdapterState::from_parts(Matrix::zeros(2, 2), None, None, cfg).is_err());
    }
}
