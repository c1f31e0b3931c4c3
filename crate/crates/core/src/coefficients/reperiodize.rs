//! Reperiodization: rewriting `A(x/eps_1, ..., x/eps_n)` with a finest scale
//! that is `Q`-separated from the others.
//!
//! With `eps_n/eps_i = p_i/q + s_i gamma_i` one has
//! `x/eps_i = s_i x/eps'_i + p_i x/eps'_n` for `eps'_i = eps_n/gamma_i` and
//! `eps'_n = q eps_n`, so `A_eps = A_sharp(x/eps'_1, ..., x/eps'_n)` with
//! `A_sharp(y) = A(s_1 y_1 + p_1 y_n, ..., q y_n)`.

use std::sync::Arc;

use serde::Serialize;

use super::{frac, Kernel, Mat, MultiscaleCoefficient};
use crate::diophantine::{simultaneous_approx, RationalApproximation, DEFAULT_SEARCH_CAP};
use crate::error::{Error, Result};

/// `A_sharp` built from a base kernel and a rational approximation.
#[derive(Debug, Clone)]
pub struct SharpKernel {
    base: Arc<dyn Kernel>,
    q: u64,
    p: Vec<i64>,
    s: Vec<i8>,
    /// For each slow slot of the base kernel, its slot in this kernel.
    slot_of: Vec<Option<usize>>,
    n_slots: usize,
}

impl SharpKernel {
    pub fn base(&self) -> &Arc<dyn Kernel> {
        &self.base
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    fn fill(&self, ys: &[f64], out: &mut [f64]) {
        let sd = self.base.slot_dim();
        let fast = &ys[(self.n_slots - 1) * sd..self.n_slots * sd];
        for (i, slot) in self.slot_of.iter().enumerate() {
            for c in 0..sd {
                let mut v = self.p[i] as f64 * fast[c];
                if let Some(k) = slot {
                    v += self.s[i] as f64 * ys[k * sd + c];
                }
                out[i * sd + c] = frac(v);
            }
        }
        let last = self.slot_of.len();
        for c in 0..sd {
            out[last * sd + c] = frac(self.q as f64 * fast[c]);
        }
    }
}

impl Kernel for SharpKernel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn slot_dim(&self) -> usize {
        self.base.slot_dim()
    }

    fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn eval(&self, x: &[f64], ys: &[f64]) -> Mat {
        let len = self.base.n_slots() * self.base.slot_dim();
        if len <= 32 {
            let mut buf = [0.0; 32];
            self.fill(ys, &mut buf[..len]);
            self.base.eval(x, &buf[..len])
        } else {
            let mut buf = vec![0.0; len];
            self.fill(ys, &mut buf);
            self.base.eval(x, &buf)
        }
    }

    fn depends_on_point(&self) -> bool {
        self.base.depends_on_point()
    }
}

/// Output of [`reperiodize`].
#[derive(Debug, Clone)]
pub struct ReperiodizationResult {
    pub sharp: MultiscaleCoefficient,
    /// Scales of `sharp`, nonincreasing; the last one is `q eps_n`.
    pub new_scales: Vec<f64>,
    pub approx: RationalApproximation,
    /// Slow indices (0-based, of the original coefficient) with `gamma_i = 0`.
    pub dropped: Vec<usize>,
    /// Original slow index of each slow slot of `sharp`.
    pub order: Vec<usize>,
}

/// Summary suitable for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct ReperiodizationSummary {
    pub new_scales: Vec<f64>,
    pub approx: RationalApproximation,
    pub dropped: Vec<usize>,
    pub order: Vec<usize>,
    pub separation: Vec<f64>,
}

impl ReperiodizationResult {
    /// `eps'_i / eps'_n = 1/(q gamma_i)` for each retained slow slot.
    pub fn separation(&self) -> Vec<f64> {
        let fine = *self.new_scales.last().unwrap();
        self.new_scales[..self.new_scales.len() - 1].iter().map(|e| e / fine).collect()
    }

    /// Whether every retained slow scale is at least `Q` times the finest.
    pub fn is_separated(&self) -> bool {
        self.separation().iter().all(|r| *r >= self.approx.big_q * (1.0 - 1e-12))
    }

    /// Largest `|A_eps(x) - A_sharp(x)| / (1 + |A_eps(x)|)` over `points`.
    pub fn identity_residual(&self, coef: &MultiscaleCoefficient, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|x| {
                let a = coef.eval(x);
                (a - self.sharp.eval(x)).amax() / (1.0 + a.amax())
            })
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> ReperiodizationSummary {
        ReperiodizationSummary {
            new_scales: self.new_scales.clone(),
            approx: self.approx.clone(),
            dropped: self.dropped.clone(),
            order: self.order.clone(),
            separation: self.separation(),
        }
    }
}

/// Reperiodizes `coef` with separation target `Q`.
pub fn reperiodize(coef: &MultiscaleCoefficient, big_q: f64) -> Result<ReperiodizationResult> {
    reperiodize_with_cap(coef, big_q, DEFAULT_SEARCH_CAP)
}

pub fn reperiodize_with_cap(coef: &MultiscaleCoefficient, big_q: f64, cap: u64) -> Result<ReperiodizationResult> {
    let n = coef.n();
    if n < 2 {
        return Err(Error::InvalidInput("reperiodization needs at least two scales".into()));
    }
    let fine = coef.finest();
    let alphas: Vec<f64> = coef.scales[..n - 1].iter().map(|e| (fine / e).min(1.0)).collect();
    let approx = simultaneous_approx(&alphas, big_q, cap)?;

    let mut retained: Vec<usize> = (0..n - 1).filter(|&i| approx.s[i] != 0).collect();
    // Larger new scale first, i.e. smaller residual first; ties keep index order.
    retained.sort_by(|&a, &b| approx.gamma[a].partial_cmp(&approx.gamma[b]).unwrap().then(a.cmp(&b)));
    let dropped: Vec<usize> = (0..n - 1).filter(|&i| approx.s[i] == 0).collect();

    let mut slot_of = vec![None; n - 1];
    for (k, &i) in retained.iter().enumerate() {
        slot_of[i] = Some(k);
    }
    let mut new_scales: Vec<f64> = retained.iter().map(|&i| fine / approx.gamma[i]).collect();
    new_scales.push(approx.q as f64 * fine);

    let kernel = SharpKernel {
        base: coef.kernel.clone(),
        q: approx.q,
        p: approx.p.clone(),
        s: approx.s.clone(),
        slot_of,
        n_slots: retained.len() + 1,
    };
    let mut sharp = MultiscaleCoefficient::new(Arc::new(kernel), new_scales.clone(), coef.lambda)?;
    sharp.holder = coef.holder;
    Ok(ReperiodizationResult { sharp, new_scales, approx, dropped, order: retained })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{check_periodicity, scalar_mat, FnKernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_scale(scales: Vec<f64>) -> MultiscaleCoefficient {
        MultiscaleCoefficient::from_expr("(2+sin(2*pi*y1))*(2+cos(2*pi*y2)) + 0.5*sin(2*pi*(y1-y2))", 1, scales, 0.1)
            .unwrap()
    }

    fn points(seed: u64, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| vec![rng.random::<f64>()]).collect()
    }

    #[test]
    fn third_plus_delta() {
        let (eps, delta) = (1e-3, 0.01);
        let coef = two_scale(vec![eps, eps * (1.0 / 3.0 + delta)]);
        let r = reperiodize(&coef, 30.0).unwrap();
        assert_eq!(r.approx.q, 3);
        assert_eq!(r.approx.p, vec![1]);
        assert_eq!(r.approx.s, vec![1]);
        assert!((r.new_scales[0] - eps * (1.0 / 3.0 + delta) / delta).abs() < 1e-12);
        assert!((r.new_scales[1] - eps * (1.0 + 3.0 * delta)).abs() < 1e-15);
        assert!(r.is_separated());
        assert!(r.identity_residual(&coef, &points(1, 1000)) < 1e-10);

        // A_sharp(y1, y2) = A(y1 + y2, 3 y2) at random arguments.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (y1, y2): (f64, f64) = (rng.random(), rng.random());
            let lhs = r.sharp.kernel.eval(&[0.0], &[y1, y2])[(0, 0)];
            let rhs = coef.kernel.eval(&[0.0], &[frac(y1 + y2), frac(3.0 * y2)])[(0, 0)];
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn already_separated_scales() {
        let coef = two_scale(vec![1.0, 1e-4]);
        let r = reperiodize(&coef, 10.0).unwrap();
        assert_eq!(r.approx.q, 1);
        assert_eq!(r.approx.p, vec![0]);
        assert!((r.approx.gamma[0] - 1e-4).abs() < 1e-18);
        assert!((r.new_scales[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.new_scales[1], 1e-4);
        assert!(r.identity_residual(&coef, &points(3, 1000)) < 1e-10);
    }

    #[test]
    fn exact_ratio_drops_a_scale() {
        let e0 = 0.01;
        let coef = two_scale(vec![2.0 * e0, e0]);
        // With Q = 3 the search reaches q = 2 and hits 1/2 exactly.
        let r = reperiodize(&coef, 3.0).unwrap();
        assert_eq!(r.approx.q, 2);
        assert_eq!(r.approx.p, vec![1]);
        assert_eq!(r.approx.gamma, vec![0.0]);
        assert_eq!(r.dropped, vec![0]);
        assert_eq!(r.sharp.n(), 1);
        assert_eq!(r.new_scales, vec![2.0 * e0]);
        assert!(r.identity_residual(&coef, &points(4, 1000)) < 1e-10);

        // At Q = 1.5 the scan stops at q = 1 since 1/2 < 1/1.5 already.
        let r = reperiodize(&coef, 1.5).unwrap();
        assert_eq!(r.approx.q, 1);
        assert_eq!(r.approx.p, vec![0]);
        assert_eq!(r.sharp.n(), 2);
        assert!(r.identity_residual(&coef, &points(5, 1000)) < 1e-10);
    }

    #[test]
    fn three_scales_are_reordered() {
        let coef = MultiscaleCoefficient::from_expr(
            "3 + sin(2*pi*y1) * cos(2*pi*y2) + 0.5*cos(2*pi*(y3 + 2*y1))",
            1,
            vec![0.05, 0.031, 0.0101],
            0.1,
        )
        .unwrap();
        let r = reperiodize(&coef, 5.0).unwrap();
        assert!(r.new_scales.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.is_separated());
        assert!(check_periodicity(&r.sharp, 200, 7).pass);
        assert!(r.identity_residual(&coef, &points(6, 1000)) < 1e-10);
    }

    #[test]
    fn two_dimensional_identity() {
        let coef = MultiscaleCoefficient::from_expr(
            "[[2+cos(2*pi*y1[1])*cos(2*pi*y2[2]), 0],[0, 2+sin(2*pi*(y1[2]+y2[1]))]]",
            2,
            vec![0.02, 0.0069],
            0.25,
        )
        .unwrap();
        let r = reperiodize(&coef, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random(), rng.random()]).collect();
        assert!(r.identity_residual(&coef, &pts) < 1e-10);
    }

    #[test]
    fn closure_kernels_work_too() {
        let k = FnKernel::new(1, 2, |_, y| scalar_mat(1, 2.0 + (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos()));
        let coef = MultiscaleCoefficient::new(Arc::new(k), vec![0.1, 0.0337], 0.5).unwrap();
        let r = reperiodize(&coef, 8.0).unwrap();
        assert!(r.identity_residual(&coef, &points(9, 500)) < 1e-10);
    }

    #[test]
    fn single_scale_is_rejected() {
        let coef = MultiscaleCoefficient::from_expr("2", 1, vec![0.1], 0.5).unwrap();
        assert!(matches!(reperiodize(&coef, 3.0), Err(Error::InvalidInput(_))));
    }
}
