//! Lifting a quasiperiodic field `B(Mx/eps)` to a multiscale periodic one.
//!
//! Each nonzero entry `M_ij` becomes its own scale `eps/|M_ij|` with slot
//! variable `y_ij`; the kernel recombines `w_i = sum_j sign(M_ij) y_ij[j]`.

use std::sync::Arc;

use super::{frac, Kernel, Mat, MultiscaleCoefficient};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct LiftedKernel {
    base: Arc<dyn Kernel>,
    dim: usize,
    /// `(i, j, sign)` per slot.
    entries: Vec<(usize, usize, f64)>,
}

impl Kernel for LiftedKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_slots(&self) -> usize {
        self.entries.len()
    }

    fn eval(&self, x: &[f64], ys: &[f64]) -> Mat {
        let mut w = vec![0.0; self.base.slot_dim()];
        for (k, &(i, j, sign)) in self.entries.iter().enumerate() {
            w[i] += sign * ys[k * self.dim + j];
        }
        w.iter_mut().for_each(|v| *v = frac(*v));
        self.base.eval(x, &w)
    }

    fn depends_on_point(&self) -> bool {
        self.base.depends_on_point()
    }
}

/// Lifts `B(M x / eps)` where `b` is periodic in `w` in `R^N` (one slot of
/// dimension `N`) and `m` is `N x d`, row-major.
pub fn lift_quasiperiodic(b: Arc<dyn Kernel>, lambda: f64, m: &[Vec<f64>], eps: f64) -> Result<MultiscaleCoefficient> {
    let big_n = b.slot_dim();
    let d = b.dim();
    if b.n_slots() != 1 {
        return Err(Error::InvalidInput("the profile must have a single periodic variable".into()));
    }
    if m.len() != big_n {
        return Err(Error::DimensionMismatch { expected: big_n, got: m.len() });
    }
    if let Some(row) = m.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: row.len() });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("M[{i}][{j}] is not finite")));
            }
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::DegenerateMatrix);
    }
    // Coarsest scale first.
    entries.sort_by(|a, b| a.2.abs().partial_cmp(&b.2.abs()).unwrap());
    let scales = entries.iter().map(|e| eps / e.2.abs()).collect();
    let kernel = LiftedKernel { base: b, dim: d, entries: entries.iter().map(|&(i, j, v)| (i, j, v.signum())).collect() };
    MultiscaleCoefficient::new(Arc::new(kernel), scales, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{check_periodicity, parse_cell_profile, ExprKernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn profile(text: &str, d: usize, big_n: usize) -> Arc<dyn Kernel> {
        Arc::new(ExprKernel::new(parse_cell_profile(text, d, big_n).unwrap(), 1).unwrap())
    }

    #[test]
    fn identity_lift() {
        let b = profile("2 + sin(2*pi*y1)", 1, 1);
        let lifted = lift_quasiperiodic(b, 0.3, &[vec![1.0]], 0.1).unwrap();
        let direct = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![0.1], 0.3).unwrap();
        assert_eq!(lifted.scales, vec![0.1]);
        for x in [0.0, 0.013, 0.37, 0.999] {
            assert!((lifted.eval(&[x])[(0, 0)] - direct.eval(&[x])[(0, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn irrational_frequency() {
        let b = profile("2 + sin(2*pi*y1)", 1, 1);
        let s2 = 2f64.sqrt();
        let lifted = lift_quasiperiodic(b, 0.3, &[vec![s2]], 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: f64 = rng.random();
            let want = 2.0 + (2.0 * PI * s2 * x / 0.01).sin();
            let got = lifted.eval(&[x])[(0, 0)];
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn golden_two_frequency_scales() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let b = profile("2 + sin(2*pi*y1[1])*cos(2*pi*y1[2])", 1, 2);
        let lifted = lift_quasiperiodic(b, 0.3, &[vec![1.0], vec![phi]], 0.05).unwrap();
        assert_eq!(lifted.n(), 2);
        assert!((lifted.scales[0] - 0.05).abs() < 1e-15);
        assert!((lifted.scales[1] - 0.05 / phi).abs() < 1e-15);
        assert!(check_periodicity(&lifted, 200, 1).pass);
        let x = 0.123;
        let want = 2.0 + (2.0 * PI * x / 0.05).sin() * (2.0 * PI * phi * x / 0.05).cos();
        assert!((lifted.eval(&[x])[(0, 0)] - want).abs() < 1e-12);
    }

    #[test]
    fn negative_and_zero_entries_in_two_dimensions() {
        let b = profile("2 + cos(2*pi*y1[1] + 1)*sin(2*pi*y1[2])", 2, 2);
        let m = vec![vec![1.0, -0.7], vec![0.0, 2f64.sqrt()]];
        let lifted = lift_quasiperiodic(b, 0.3, &m, 0.02).unwrap();
        assert_eq!(lifted.n(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let w0 = (x[0] - 0.7 * x[1]) / 0.02;
            let w1 = 2f64.sqrt() * x[1] / 0.02;
            let want = 2.0 + (2.0 * PI * w0 + 1.0).cos() * (2.0 * PI * w1).sin();
            let got = lifted.eval(&x);
            assert!((got[(0, 0)] - want).abs() < 1e-10);
            assert!((got[(1, 1)] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let b = profile("2", 1, 1);
        assert!(matches!(lift_quasiperiodic(b, 0.5, &[vec![0.0]], 0.1), Err(Error::DegenerateMatrix)));
    }
}
