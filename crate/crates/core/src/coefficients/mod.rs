//! Multiscale periodic coefficient fields `A(x/eps_1, ..., x/eps_n)`.

pub mod expr;
mod lift;
mod reperiodize;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use expr::{parse_cell_profile, parse_coefficient, CoefficientExpr, FieldExpr};
pub use lift::lift_quasiperiodic;
pub use reperiodize::{reperiodize, reperiodize_with_cap, ReperiodizationResult, ReperiodizationSummary, SharpKernel};

/// Matrix values; one-dimensional fields only use entry `(0, 0)`.
pub type Mat = Matrix2<f64>;

/// Periodic kernel `(x, y_1, ..., y_n) -> A`.
///
/// `ys` holds the fast variables back to back, `slot_dim` coordinates per
/// slot. `x` is the physical point, used by locally periodic kernels.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn slot_dim(&self) -> usize {
        self.dim()
    }

    fn n_slots(&self) -> usize;

    fn eval(&self, x: &[f64], ys: &[f64]) -> Mat;

    fn depends_on_point(&self) -> bool {
        false
    }
}

/// Kernel backed by a parsed expression.
#[derive(Debug, Clone)]
pub struct ExprKernel {
    expr: CoefficientExpr,
    n_slots: usize,
}

impl ExprKernel {
    /// `n_slots` may exceed the number of variables the expression mentions.
    pub fn new(expr: CoefficientExpr, n_slots: usize) -> Result<Self> {
        if expr.n_slots() > n_slots {
            return Err(Error::DimensionMismatch { expected: n_slots, got: expr.n_slots() });
        }
        Ok(ExprKernel { expr, n_slots })
    }

    pub fn expr(&self) -> &CoefficientExpr {
        &self.expr
    }
}

impl Kernel for ExprKernel {
    fn dim(&self) -> usize {
        self.expr.dim()
    }

    fn slot_dim(&self) -> usize {
        self.expr.slot_dim()
    }

    fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn eval(&self, x: &[f64], ys: &[f64]) -> Mat {
        let mut m = [[0.0; 2]; 2];
        self.expr.eval_entries(x, ys, &mut m);
        Mat::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    fn depends_on_point(&self) -> bool {
        self.expr.uses_point()
    }
}

type KernelFn = dyn Fn(&[f64], &[f64]) -> Mat + Send + Sync;

/// Kernel backed by a closure.
#[derive(Clone)]
pub struct FnKernel {
    dim: usize,
    n_slots: usize,
    point: bool,
    f: Arc<KernelFn>,
}

impl FnKernel {
    pub fn new(dim: usize, n_slots: usize, f: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static) -> Self {
        FnKernel { dim, n_slots, point: false, f: Arc::new(f) }
    }

    /// Marks the kernel as depending on the physical point.
    pub fn with_point(mut self) -> Self {
        self.point = true;
        self
    }
}

impl fmt::Debug for FnKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel").field("dim", &self.dim).field("n_slots", &self.n_slots).finish()
    }
}

impl Kernel for FnKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn eval(&self, x: &[f64], ys: &[f64]) -> Mat {
        (self.f)(x, ys)
    }

    fn depends_on_point(&self) -> bool {
        self.point
    }
}

/// Scalar multiple of the identity in dimension `dim`.
pub fn scalar_mat(dim: usize, v: f64) -> Mat {
    if dim == 1 {
        Mat::new(v, 0.0, 0.0, 0.0)
    } else {
        Mat::new(v, 0.0, 0.0, v)
    }
}

/// Declared Hölder data `(tau, L)` in the slow variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holder {
    pub tau: f64,
    pub l: f64,
}

/// A kernel together with its scales and declared structural constants.
#[derive(Debug, Clone)]
pub struct MultiscaleCoefficient {
    pub kernel: Arc<dyn Kernel>,
    pub scales: Vec<f64>,
    pub lambda: f64,
    pub holder: Option<Holder>,
}

impl MultiscaleCoefficient {
    pub fn new(kernel: Arc<dyn Kernel>, scales: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(1..=2).contains(&kernel.dim()) {
            return Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {}", kernel.dim())));
        }
        if kernel.slot_dim() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), got: kernel.slot_dim() });
        }
        if kernel.n_slots() != scales.len() {
            return Err(Error::DimensionMismatch { expected: kernel.n_slots(), got: scales.len() });
        }
        if scales.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidInput("scales must be positive and finite".into()));
        }
        if scales.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("scales must be sorted nonincreasing".into()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidInput(format!("ellipticity constant must lie in (0, 1], got {lambda}")));
        }
        Ok(MultiscaleCoefficient { kernel, scales, lambda, holder: None })
    }

    /// Parses `text` and attaches `scales`.
    pub fn from_expr(text: &str, dim: usize, scales: Vec<f64>, lambda: f64) -> Result<Self> {
        let e = parse_coefficient(text, dim)?;
        let k = ExprKernel::new(e, scales.len())?;
        Self::new(Arc::new(k), scales, lambda)
    }

    pub fn with_holder(mut self, tau: f64, l: f64) -> Self {
        self.holder = Some(Holder { tau, l });
        self
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn n(&self) -> usize {
        self.scales.len()
    }

    /// Finest scale.
    pub fn finest(&self) -> f64 {
        *self.scales.last().expect("at least one scale")
    }

    /// Fast coordinates `frac(x / eps_i)` for every slot.
    pub fn fast_coords(&self, x: &[f64], ys: &mut Vec<f64>) {
        let d = self.dim();
        ys.clear();
        for &e in &self.scales {
            for xk in &x[..d] {
                ys.push(frac(xk / e));
            }
        }
    }

    /// `A(x/eps_1, ..., x/eps_n)`.
    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut ys = Vec::with_capacity(self.n() * self.dim());
        self.fast_coords(x, &mut ys);
        self.kernel.eval(x, &ys)
    }

    /// Same coefficient with different scales.
    pub fn with_scales(&self, scales: Vec<f64>) -> Result<Self> {
        let mut c = Self::new(self.kernel.clone(), scales, self.lambda)?;
        c.holder = self.holder;
        Ok(c)
    }
}

/// `A_eps(x)`; the free function form of [`MultiscaleCoefficient::eval`].
pub fn eval_multiscale(coef: &MultiscaleCoefficient, x: &[f64]) -> Mat {
    coef.eval(x)
}

/// Fractional part in `[0, 1)`.
pub fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Serializable description of a coefficient, as used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub expr: String,
    pub dim: usize,
    pub scales: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub holder: Option<Holder>,
}

fn default_lambda() -> f64 {
    0.25
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<MultiscaleCoefficient> {
        let mut c = MultiscaleCoefficient::from_expr(&self.expr, self.dim, self.scales.clone(), self.lambda)?;
        c.holder = self.holder;
        Ok(c)
    }
}

/// Outcome of [`check_ellipticity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub samples: usize,
    /// Smallest `xi . A xi` over unit `xi`.
    pub min_quotient: f64,
    /// Largest `|A xi|` over unit `xi`.
    pub max_norm: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub pass: bool,
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vector2<f64> {
    if d == 1 {
        return Vector2::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0);
    }
    let t = rng.random::<f64>() * std::f64::consts::TAU;
    Vector2::new(t.cos(), t.sin())
}

fn random_point(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Samples `y` and unit `xi` and compares against `Lambda`.
pub fn check_ellipticity(coef: &MultiscaleCoefficient, n_samples: usize, seed: u64) -> EllipticityReport {
    check_kernel_ellipticity(coef.kernel.as_ref(), coef.lambda, n_samples, seed)
}

pub fn check_kernel_ellipticity(k: &dyn Kernel, lambda: f64, n_samples: usize, seed: u64) -> EllipticityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = k.dim();
    let mut min_q = f64::INFINITY;
    let mut max_n = 0.0f64;
    for _ in 0..n_samples.max(1) {
        let ys = random_point(&mut rng, k.n_slots() * k.slot_dim());
        let x = random_point(&mut rng, d);
        let a = k.eval(&x, &ys);
        let xi = random_unit(&mut rng, d);
        let axi = a * xi;
        min_q = min_q.min(xi.dot(&axi));
        max_n = max_n.max(axi.norm());
    }
    let lower_ok = min_q >= lambda * (1.0 - 1e-12);
    let upper_ok = max_n <= (1.0 + 1e-12) / lambda;
    EllipticityReport { samples: n_samples.max(1), min_quotient: min_q, max_norm: max_n, lower_ok, upper_ok, pass: lower_ok && upper_ok }
}

/// Outcome of [`check_periodicity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub samples: usize,
    /// Largest `|A(y + z) - A(y)| / (1 + |A(y)|)`, entrywise, over integer `z`.
    pub max_discrepancy: f64,
    pub pass: bool,
}

/// Compares the kernel at random `y` against random integer shifts of `y`.
pub fn check_periodicity(coef: &MultiscaleCoefficient, n_samples: usize, seed: u64) -> PeriodicityReport {
    check_kernel_periodicity(coef.kernel.as_ref(), n_samples, seed)
}

pub fn check_kernel_periodicity(k: &dyn Kernel, n_samples: usize, seed: u64) -> PeriodicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let len = k.n_slots() * k.slot_dim();
    for _ in 0..n_samples.max(1) {
        let ys = random_point(&mut rng, len);
        let x = random_point(&mut rng, k.dim());
        let shifted: Vec<f64> = ys.iter().map(|y| y + rng.random_range(-3i32..=3) as f64).collect();
        let a = k.eval(&x, &ys);
        let b = k.eval(&x, &shifted);
        worst = worst.max((a - b).amax() / (1.0 + a.amax()));
    }
    PeriodicityReport { samples: n_samples.max(1), max_discrepancy: worst, pass: worst <= 1e-12 }
}

/// Outcome of [`check_holder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub samples: usize,
    /// Largest `|A(y) - A(y')| / |y - y'|^tau` over pairs differing in one
    /// slow slot, entrywise maximum norm.
    pub max_quotient: f64,
    pub pass: bool,
}

/// Spot-checks the declared Hölder bound in `y_1..y_{n-1}`.
pub fn check_holder(k: &dyn Kernel, holder: Holder, n_samples: usize, seed: u64) -> HolderReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = k.slot_dim();
    let slow = k.n_slots().saturating_sub(1);
    let mut worst = 0.0f64;
    if slow > 0 {
        for _ in 0..n_samples.max(1) {
            let ys = random_point(&mut rng, k.n_slots() * sd);
            let x = random_point(&mut rng, k.dim());
            let slot = rng.random_range(0..slow);
            let mut other = ys.clone();
            let mut dist2 = 0.0;
            for c in 0..sd {
                let step = 10f64.powf(rng.random_range(-4.0..-0.5)) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                other[slot * sd + c] += step;
                dist2 += step * step;
            }
            let diff = (k.eval(&x, &ys) - k.eval(&x, &other)).amax();
            worst = worst.max(diff / dist2.sqrt().powf(holder.tau));
        }
    }
    HolderReport { samples: n_samples.max(1), max_quotient: worst, pass: worst <= holder.l }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_kernel() {
        let c = MultiscaleCoefficient::from_expr("2", 2, vec![0.1], 0.5).unwrap();
        assert_eq!(c.eval(&[0.37, 0.81]), Mat::new(2.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn one_scale_sine() {
        let c = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![0.1], 1.0 / 3.0).unwrap();
        assert!((c.eval(&[0.025])[(0, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_scale_product() {
        let c = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)*cos(2*pi*y2)", 1, vec![0.1, 0.01], 0.5).unwrap();
        let expected = 2.0 - (0.1 * PI).sin();
        assert!((c.eval(&[0.005])[(0, 0)] - expected).abs() < 1e-12);
        assert!((expected - 1.690_983).abs() < 1e-6);
    }

    #[test]
    fn large_arguments_keep_their_phase() {
        let c = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![1e-7], 0.25).unwrap();
        // x / eps = 2.5e6 + 0.25 exactly in binary up to rounding of x.
        let x = (2_500_000.0 + 0.25) * 1e-7;
        assert!((c.eval(&[x])[(0, 0)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_scales() {
        assert!(MultiscaleCoefficient::from_expr("2", 1, vec![0.1, 0.2], 0.5).is_err());
        assert!(MultiscaleCoefficient::from_expr("2", 1, vec![0.0], 0.5).is_err());
        assert!(MultiscaleCoefficient::from_expr("2 + sin(2*pi*y2)", 1, vec![0.1], 0.5).is_err());
    }

    #[test]
    fn ellipticity_identity() {
        let c = MultiscaleCoefficient::from_expr("1", 2, vec![1.0], 1.0).unwrap();
        let r = check_ellipticity(&c, 100, 1);
        assert!(r.pass);
        assert!((r.min_quotient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ellipticity_shifted_sine() {
        let c = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![1.0], 1.0).unwrap();
        let r = check_ellipticity(&c, 1000, 2);
        assert!(r.lower_ok);
        assert!(r.min_quotient >= 1.0);
        // The range of a is [1, 3], so |a xi| <= 1/Lambda needs Lambda <= 1/3.
        assert!(!r.upper_ok);
        let c = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![1.0], 1.0 / 3.0).unwrap();
        assert!(check_ellipticity(&c, 1000, 2).pass);
    }

    #[test]
    fn ellipticity_vanishing_coefficient() {
        let c = MultiscaleCoefficient::from_expr("sin(2*pi*y1)", 1, vec![1.0], 0.5).unwrap();
        let r = check_ellipticity(&c, 200, 3);
        assert!(!r.pass);
        assert!(!r.lower_ok);
    }

    #[test]
    fn periodicity_of_parsed_kernels() {
        let c = MultiscaleCoefficient::from_expr(
            "[[2+cos(2*pi*y1[1])*cos(2*pi*y2[2]), 0.3*sin(2*pi*(y1[2]+y2[1]))],[0.3*sin(2*pi*(y1[2]+y2[1])), 2]]",
            2,
            vec![0.1, 0.01],
            0.25,
        )
        .unwrap();
        assert!(check_periodicity(&c, 500, 4).pass);
    }

    #[test]
    fn periodicity_catches_closures() {
        let k = FnKernel::new(1, 1, |_, y| scalar_mat(1, 2.0 + y[0]));
        assert!(!check_kernel_periodicity(&k, 50, 5).pass);
    }

    #[test]
    fn holder_of_smooth_kernel() {
        let c = MultiscaleCoefficient::from_expr("2 + 0.5*sin(2*pi*y1)*cos(2*pi*y2)", 1, vec![0.1, 0.01], 0.25).unwrap();
        let r = check_holder(c.kernel.as_ref(), Holder { tau: 1.0, l: PI }, 2000, 6);
        assert!(r.pass, "{r:?}");
        assert!(r.max_quotient > 2.0);
        assert!(!check_holder(c.kernel.as_ref(), Holder { tau: 1.0, l: 1.0 }, 2000, 6).pass);
    }

    #[test]
    fn coefficient_description_round_trip() {
        let s = CoefficientSpec { expr: "2".into(), dim: 1, scales: vec![0.5, 0.1], lambda: 0.5, holder: None };
        let c = s.build().unwrap();
        assert_eq!(c.n(), 2);
        let text = toml::to_string(&s).unwrap();
        let back: CoefficientSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
