//! Smoothing and averaging operators and grid norms.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, Location};
use crate::quadrature::gauss_on;

fn bump(s2: f64) -> f64 {
    // exp(-1/(1 - 4|x|^2)) for |x|^2 = s2 < 1/4.
    let q = 1.0 - 4.0 * s2;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Normalized bump `c_d exp(-1/(1 - 4|x|^2))` supported in the ball of
/// radius one half.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub dim: usize,
    pub norm: f64,
    /// Quadrature on the support: `(w, phi(w) dw)`.
    rule: Vec<([f64; 2], f64)>,
}

impl Mollifier {
    pub fn new(dim: usize) -> Self {
        let mut rule = Vec::new();
        if dim == 1 {
            for p in 0..64 {
                let a = -0.5 + p as f64 / 64.0;
                for (x, w) in gauss_on(8, a, a + 1.0 / 64.0) {
                    rule.push(([x, 0.0], w * bump(x * x)));
                }
            }
        } else {
            let angles = 48;
            for p in 0..12 {
                let a = p as f64 / 24.0;
                for (r, w) in gauss_on(6, a, a + 1.0 / 24.0) {
                    let radial = w * r * bump(r * r) * 2.0 * PI / angles as f64;
                    for k in 0..angles {
                        let th = (k as f64 + 0.5) * 2.0 * PI / angles as f64;
                        rule.push(([r * th.cos(), r * th.sin()], radial));
                    }
                }
            }
        }
        let mass = rule.iter().map(|r| r.1).sum::<f64>();
        rule.iter_mut().for_each(|r| r.1 /= mass);
        // The pointwise constant comes from a much finer radial rule.
        let mut total = 0.0;
        for p in 0..256 {
            let a = p as f64 / 512.0;
            for (r, w) in gauss_on(8, a, a + 1.0 / 512.0) {
                total += w * if dim == 1 { 2.0 * bump(r * r) } else { 2.0 * PI * r * bump(r * r) };
            }
        }
        Mollifier { dim, norm: 1.0 / total, rule }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let s2: f64 = x[..self.dim].iter().map(|v| v * v).sum();
        self.norm * bump(s2)
    }

    /// Offsets `eps w` and weights `phi(w) dw` for `int g(x - eps w) phi(w) dw`.
    pub fn rule(&self, eps: f64) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.rule.iter().map(move |(w, wt)| ([eps * w[0], eps * w[1]], *wt))
    }

    /// Total quadrature mass; one up to rounding.
    pub fn mass(&self) -> f64 {
        self.rule.iter().map(|r| r.1).sum()
    }
}

/// `S_eps(g^eps)(x) = int g(x - eps w, x/eps) phi(w) dw` at every point of
/// `field`; only the first slot is smoothed.
pub fn smooth_partial(
    g: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    eps: f64,
    field: &GridField,
) -> Result<GridField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let required = eps / crate::elliptic::MIN_CELLS_PER_PERIOD;
    if field.h > required * (1.0 + 1e-12) {
        return Err(Error::UnresolvedScale { h: field.h, scale: eps, required });
    }
    let m = Mollifier::new(field.dim);
    let d = field.dim;
    let mut out = field.like(1);
    out.values = (0..field.n_points())
        .into_par_iter()
        .map(|k| {
            let x = field.point(k);
            let y = [x[0] / eps, x[1] / eps];
            m.rule(eps)
                .map(|(off, w)| {
                    let z = [x[0] - off[0], x[1] - off[1]];
                    w * g(&z[..d], &y[..d])
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Value at `p`: piecewise constant for cell fields, (bi)linear for node
/// fields; magnitude over components.
pub fn sample(field: &GridField, p: &[f64]) -> f64 {
    let mut v = [0.0; 4];
    sample_into(field, p, &mut v[..field.components]);
    v[..field.components].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Component values at `p`, clamped to the domain.
pub fn sample_into(field: &GridField, p: &[f64], out: &mut [f64]) {
    let n = field.cells;
    let c = field.components;
    let local = |axis: usize| ((p[axis] - field.origin[axis]) / field.h).clamp(0.0, n as f64);
    match field.location {
        Location::Cell | Location::Periodic => {
            let idx = |axis: usize| {
                if field.location == Location::Periodic {
                    ((p[axis] - field.origin[axis]) / field.h).round().rem_euclid(n as f64) as usize % n
                } else {
                    (local(axis).floor() as usize).min(n - 1)
                }
            };
            let k = if field.dim == 1 { idx(0) } else { field.index(idx(0), idx(1)) };
            out.copy_from_slice(&field.values[k * c..(k + 1) * c]);
        }
        Location::Node => {
            let s = local(0);
            let i = (s.floor() as usize).min(n - 1);
            let fs = s - i as f64;
            if field.dim == 1 {
                for (q, o) in out.iter_mut().enumerate() {
                    *o = (1.0 - fs) * field.get(i, q) + fs * field.get(i + 1, q);
                }
            } else {
                let t = local(1);
                let j = (t.floor() as usize).min(n - 1);
                let ft = t - j as f64;
                for (q, o) in out.iter_mut().enumerate() {
                    *o = (1.0 - fs) * (1.0 - ft) * field.get(field.index(i, j), q)
                        + fs * (1.0 - ft) * field.get(field.index(i + 1, j), q)
                        + (1.0 - fs) * ft * field.get(field.index(i, j + 1), q)
                        + fs * ft * field.get(field.index(i + 1, j + 1), q);
                }
            }
        }
    }
}

const SUB: usize = 4;

/// Integration region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Whole,
    /// Axis-aligned box `[lo, hi]`.
    Box { lo: [f64; 2], hi: [f64; 2] },
    Ball { center: [f64; 2], r: f64 },
    /// Points of the field's domain within distance `t` of its boundary.
    Layer { t: f64 },
}

impl Region {
    fn contains(&self, field: &GridField, p: &[f64]) -> bool {
        let d = field.dim;
        match *self {
            Region::Whole => true,
            Region::Box { lo, hi } => (0..d).all(|a| p[a] >= lo[a] && p[a] <= hi[a]),
            Region::Ball { center, r } => (0..d).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() < r * r,
            Region::Layer { t } => {
                let len = field.length();
                (0..d).any(|a| {
                    let s = p[a] - field.origin[a];
                    s < t || len - s < t
                })
            }
        }
    }
}

/// Quadrature points and weights of the field over `region`.
///
/// Cell fields: `4^d` subsamples per cell, each with its share of the cell
/// volume. Node fields: trapezoid weights of the nodes inside the region.
pub fn region_weights(field: &GridField, region: &Region) -> Vec<(usize, f64)> {
    let d = field.dim;
    let vol = field.h.powi(d as i32);
    let mut out = Vec::new();
    match field.location {
        Location::Node => {
            let n = field.cells;
            for k in 0..field.n_points() {
                let p = field.point(k);
                if region.contains(field, &p) {
                    let (i, j) = field.split(k);
                    let edge = |m: usize| if m == 0 || m == n { 0.5 } else { 1.0 };
                    let w = if d == 1 { edge(i) } else { edge(i) * edge(j) };
                    out.push((k, w * vol));
                }
            }
        }
        _ => {
            let sub_vol = vol / (SUB.pow(d as u32)) as f64;
            for k in 0..field.n_points() {
                let (i, j) = field.split(k);
                let base = [field.origin[0] + i as f64 * field.h, field.origin[1] + j as f64 * field.h];
                let mut count = 0usize;
                let jj = if d == 1 { 1 } else { SUB };
                for b in 0..jj {
                    for a in 0..SUB {
                        let p = [
                            base[0] + (a as f64 + 0.5) * field.h / SUB as f64,
                            base[1] + (b as f64 + 0.5) * field.h / SUB as f64,
                        ];
                        if region.contains(field, &p) {
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    out.push((k, count as f64 * sub_vol));
                }
            }
        }
    }
    out
}

/// `(int_region |f|^p)^{1/p}`, or the maximum for `p = inf`.
pub fn lp_norm(field: &GridField, p: f64, region: &Region) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p must be at least 1, got {p}")));
    }
    let w = region_weights(field, region);
    if p.is_infinite() {
        return Ok(w.iter().map(|(k, _)| field.magnitude(*k)).fold(0.0, f64::max));
    }
    let s: f64 = w.iter().map(|(k, wt)| wt * field.magnitude(*k).powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// Mean of `|f|^2` over `region`, normalized by the covered volume.
pub fn mean_square(field: &GridField, region: &Region) -> f64 {
    let w = region_weights(field, region);
    let vol: f64 = w.iter().map(|x| x.1).sum();
    if vol == 0.0 {
        return 0.0;
    }
    w.iter().map(|(k, wt)| wt * field.magnitude(*k).powi(2)).sum::<f64>() / vol
}

/// `L^2` norm over the boundary layer of width `t`.
pub fn layer_norm(field: &GridField, t: f64) -> Result<f64> {
    lp_norm(field, 2.0, &Region::Layer { t })
}

/// `M_t[f](x)`: root mean square of `|f|` over the ball of radius `t`
/// around each point, clipped to the domain and normalized by the clipped
/// volume.
pub fn average_mt(field: &GridField, t: f64, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let d = field.dim;
    let h = field.h;
    let n = field.cells;
    let fine = h / SUB as f64;
    let res = points
        .par_iter()
        .map(|x| {
            let range = |axis: usize| {
                let lo = ((x[axis] - t - field.origin[axis]) / fine).floor().max(0.0) as usize;
                let hi = (((x[axis] + t - field.origin[axis]) / fine).ceil() as usize).min(n * SUB);
                (lo, hi)
            };
            let (ilo, ihi) = range(0);
            let (jlo, jhi) = if d == 2 { range(1) } else { (0, 1) };
            let mut sum = 0.0;
            let mut count = 0usize;
            for b in jlo..jhi {
                for a in ilo..ihi {
                    let p = [field.origin[0] + (a as f64 + 0.5) * fine, field.origin[1] + (b as f64 + 0.5) * fine];
                    let r2 = (p[0] - x[0]).powi(2) + if d == 2 { (p[1] - x[1]).powi(2) } else { 0.0 };
                    if r2 < t * t {
                        sum += sample(field, &p).powi(2);
                        count += 1;
                    }
                }
            }
            if count == 0 {
                sample(field, x)
            } else {
                (sum / count as f64).sqrt()
            }
        })
        .collect();
    Ok(res)
}

/// `mean_{B_r} M_t[F]^2 / mean_{B_2r} |F|^2` around `center`, with the outer
/// mean taken over the cell centers in `B_r`.
pub fn averaging_ratio(field: &GridField, center: [f64; 2], r: f64, t: f64) -> Result<f64> {
    let d = field.dim;
    let pts: Vec<[f64; 2]> = (0..field.cells.pow(d as u32))
        .map(|k| {
            let (i, j) = if d == 1 { (k, 0) } else { (k % field.cells, k / field.cells) };
            [field.origin[0] + (i as f64 + 0.5) * field.h, field.origin[1] + (j as f64 + 0.5) * field.h]
        })
        .filter(|p| (0..d).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() < r * r)
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput("ball contains no grid cell".into()));
    }
    let m = average_mt(field, t, &pts)?;
    let lhs = m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64;
    let rhs = mean_square(field, &Region::Ball { center, r: 2.0 * r });
    Ok(lhs / rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mollifier_mass_and_support() {
        for d in 1..=2 {
            let m = Mollifier::new(d);
            assert!((m.mass() - 1.0).abs() < 1e-14, "d={d} mass={}", m.mass());
            // Bump integrals to 30 digits: 0.22199690808403971891 (d = 1),
            // 0.11662809829458251722 (d = 2).
            let exact = if d == 1 { 0.221_996_908_084_039_72 } else { 0.116_628_098_294_582_52 };
            assert!((m.norm * exact - 1.0).abs() < 1e-12, "d={d} {}", m.norm * exact - 1.0);
            assert_eq!(m.eval(&[0.5, 0.0]), 0.0);
            if d == 2 {
                assert_eq!(m.eval(&[0.3, 0.4]), 0.0);
            }
            assert!(m.eval(&[0.1, 0.1]) > 0.0);
        }
    }

    fn grid(d: usize, cells: usize) -> GridField {
        GridField::zeros(d, [0.0, 0.0], 1.0 / cells as f64, cells, Location::Node, 1)
    }

    #[test]
    fn smoothing_fast_only_is_identity() {
        let g = |_: &[f64], y: &[f64]| (2.0 * PI * y[0]).sin() + 2.0;
        let f = grid(1, 80);
        let s = smooth_partial(&g, 0.1, &f).unwrap();
        for k in 0..f.n_points() {
            let x = f.point(k)[0];
            assert!((s.values[k] - g(&[0.0], &[x / 0.1])).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_linear_slot() {
        for d in 1..=2 {
            let g = |z: &[f64], _: &[f64]| z[0];
            let f = grid(d, 80);
            let s = smooth_partial(&g, 0.1, &f).unwrap();
            for k in 0..f.n_points() {
                assert!((s.values[k] - f.point(k)[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_against_fine_quadrature() {
        let eps = 0.1;
        let g = |z: &[f64], y: &[f64]| (2.0 * PI * z[0]).sin() * (2.0 * PI * y[0]).cos();
        let f = grid(1, 100);
        let s = smooth_partial(&g, eps, &f).unwrap();
        let m = Mollifier::new(1);
        for k in [0, 13, 50, 77] {
            let x = f.point(k)[0];
            let direct = integrate(
                &|z: f64| g(&[z], &[x / eps]) * m.eval(&[(x - z) / eps]) / eps,
                x - eps / 2.0,
                x + eps / 2.0,
                1e-14,
            );
            assert!((s.values[k] - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn smoothing_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (a, b, k) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(1..6) as f64);
            let g = move |z: &[f64], y: &[f64]| a * (2.0 * PI * k * z[0]).cos() + b * (2.0 * PI * y[0]).sin();
            let f = grid(1, 200);
            let s = smooth_partial(&g, 0.05, &f).unwrap();
            let mut raw = f.clone();
            raw.fill(|p, _| g(p, &[p[0] / 0.05]));
            let ratio = lp_norm(&s, 2.0, &Region::Whole).unwrap() / lp_norm(&raw, 2.0, &Region::Whole).unwrap();
            assert!(ratio <= 2.0);
        }
    }

    #[test]
    fn smoothing_needs_resolution() {
        let g = |_: &[f64], _: &[f64]| 1.0;
        assert!(matches!(smooth_partial(&g, 0.1, &grid(1, 10)), Err(Error::UnresolvedScale { .. })));
    }

    #[test]
    fn mt_of_constant() {
        let mut f = GridField::zeros(2, [0.0, 0.0], 1.0 / 32.0, 32, Location::Cell, 1);
        f.fill(|_, _| -3.0);
        let m = average_mt(&f, 0.1, &[[0.5, 0.5], [0.02, 0.9], [1.0, 1.0]]).unwrap();
        assert!(m.iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn mt_of_half_space() {
        let mut f = GridField::zeros(2, [0.0, 0.0], 1.0 / 64.0, 64, Location::Cell, 1);
        f.fill(|p, _| if p[0] < 0.5 { 2.0 } else { 0.0 });
        let m = average_mt(&f, 0.2, &[[0.5, 0.5]]).unwrap();
        assert!((m[0] - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mt_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut f = GridField::zeros(1, [0.0, 0.0], 1.0 / 50.0, 50, Location::Cell, 1);
        let mut g = f.clone();
        for k in 0..50 {
            let v: f64 = rng.random_range(-1.0..1.0);
            f.values[k] = v;
            g.values[k] = v.abs() + rng.random::<f64>();
        }
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 19.0, 0.0]).collect();
        let mf = average_mt(&f, 0.07, &pts).unwrap();
        let mg = average_mt(&g, 0.07, &pts).unwrap();
        assert!(mf.iter().zip(&mg).all(|(a, b)| a <= b));
    }

    #[test]
    fn averaging_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for d in 1..=2 {
            let cells = if d == 1 { 256 } else { 64 };
            let mut f = GridField::zeros(d, [0.0, 0.0], 1.0 / cells as f64, cells, Location::Cell, 1);
            for v in f.values.iter_mut() {
                *v = rng.random_range(-1.0..1.0) * if rng.random::<f64>() < 0.1 { 10.0 } else { 1.0 };
            }
            let c = averaging_ratio(&f, [0.5, 0.5], 0.2, 0.1).unwrap();
            assert!(c <= 2f64.powi(d as i32 + 1), "{c}");
        }
    }

    #[test]
    fn norms() {
        let mut c = GridField::zeros(2, [0.0, 0.0], 0.1, 10, Location::Cell, 1);
        c.fill(|_, _| 1.5);
        assert!((lp_norm(&c, 4.0, &Region::Whole).unwrap() - 1.5).abs() < 1e-13);
        assert_eq!(lp_norm(&c, f64::INFINITY, &Region::Whole).unwrap(), 1.5);
        let mut x = GridField::zeros(1, [0.0, 0.0], 1.0 / 1000.0, 1000, Location::Node, 1);
        x.fill(|p, _| p[0]);
        assert!((lp_norm(&x, 2.0, &Region::Whole).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-6);
        // Strip integral of x^2 over [0, 0.1] and [0.9, 1].
        let strip = ((0.001 + 1.0 - 0.729) / 3.0f64).sqrt();
        let mut xc = GridField::zeros(1, [0.0, 0.0], 1.0 / 1000.0, 1000, Location::Cell, 1);
        xc.fill(|p, _| p[0]);
        assert!((layer_norm(&xc, 0.1).unwrap() - strip).abs() < 2e-3);
        assert!(lp_norm(&x, 0.5, &Region::Whole).is_err());
    }

    #[test]
    fn norm_matches_weighted_sum() {
        let mut f = GridField::zeros(2, [0.0, 0.0], 1.0 / 16.0, 16, Location::Node, 2);
        f.fill(|p, c| (p[0] + 2.0 * p[1]).sin() + c as f64);
        let w = region_weights(&f, &Region::Whole);
        let direct: f64 = w.iter().map(|(k, wt)| wt * (f.get(*k, 0).powi(2) + f.get(*k, 1).powi(2))).sum();
        let n = lp_norm(&f, 2.0, &Region::Whole).unwrap();
        assert!((n * n - direct).abs() < 1e-12);
    }

    #[test]
    fn ball_region_volume() {
        let mut f = GridField::zeros(2, [0.0, 0.0], 1.0 / 128.0, 128, Location::Cell, 1);
        f.fill(|_, _| 1.0);
        let v = lp_norm(&f, 1.0, &Region::Ball { center: [0.5, 0.5], r: 0.3 }).unwrap();
        assert!((v - PI * 0.09).abs() < 1e-3);
    }
}
