//! One-scale reduction, the corrector term `U`, locally periodic rate studies
//! and rate fitting.
//!
//! The reduction of a coefficient with `n` scales runs as follows: solve
//! `u_eps` on the unit interval or square, reperiodize at target `Q`, tabulate
//! the effective matrix of the finest slot over a lattice of slow points
//! (`A_flat`), solve the reduced problem on the box `B_r` with boundary data
//! taken from `u_eps`, and compare `grad u_eps` with `grad u_flat + U`.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{reiterated_effective, slow_lattice, solve_frozen, ReiteratedTable};
use crate::coefficients::{frac, reperiodize, Kernel, Mat, MultiscaleCoefficient, ReperiodizationSummary};
use crate::elliptic::{
    cell_gradient, solve_dirichlet_with, Domain, Forcing, Scalar, DEFAULT_CELLS_PER_PERIOD, MIN_CELLS_PER_PERIOD,
};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::linalg::DEFAULT_TOL;
use crate::operators::{lp_norm, sample_into, Mollifier, Region};
use crate::quadrature::{gauss_on, integrate};

/// Least-squares line through `(log scale, log error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on `(ln scale, ln error)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least three pairs, got {}", pairs.len())));
    }
    if let Some((s, e)) = pairs.iter().find(|(s, e)| !(*s > 0.0) || !(*e > 0.0)) {
        return Err(Error::DegenerateFit(format!("nonpositive value in pair ({s}, {e})")));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all scales are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared })
}

/// Whether `A(x, y_1..y_n)` ignores `y_n`, judged by exact equality on random
/// samples.
pub fn fast_slot_is_trivial(k: &dyn Kernel, samples: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = k.slot_dim();
    let len = k.n_slots() * sd;
    let d = k.dim();
    (0..samples).all(|_| {
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let mut ys: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let a = k.eval(&x, &ys);
        (0..3).all(|_| {
            for v in &mut ys[len - sd..] {
                *v = rng.random();
            }
            k.eval(&x, &ys) == a
        })
    })
}

/// Periodic cubic Lagrange weights of `t` on `n` lattice points.
fn cubic_weights(t: f64, n: usize) -> [(usize, f64); 4] {
    let s = frac(t) * n as f64;
    let i0 = s.floor();
    let u = s - i0;
    let w = [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ];
    let i0 = i0 as isize;
    let mut out = [(0, 0.0); 4];
    for (k, o) in out.iter_mut().enumerate() {
        *o = ((i0 - 1 + k as isize).rem_euclid(n as isize) as usize, w[k]);
    }
    out
}

/// Tensor-product weights on a `slow_lattice(dims, n)` index set.
fn lattice_weights(zeta: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut out = vec![(0usize, 1.0)];
    let mut stride = 1;
    for &z in zeta {
        let w = cubic_weights(z, n);
        out = out.iter().flat_map(|&(k, a)| w.iter().map(move |&(i, b)| (k + i * stride, a * b))).collect();
        stride *= n;
    }
    out
}

/// Provenance of an interpolated `A_flat`.
#[derive(Debug, Clone, Serialize)]
pub struct FlatProvenance {
    pub per_axis: usize,
    pub slow_dims: usize,
    pub points: usize,
    pub cell_cells: usize,
    /// Smallest eigenvalue of the symmetric part over the lattice.
    pub min_eigenvalue: f64,
}

/// `A_flat` and the finest-slot correctors of a kernel, tabulated on a slow
/// lattice and interpolated with periodic cubics.
#[derive(Debug, Clone)]
pub struct FlatModel {
    kernel: Arc<dyn Kernel>,
    per_axis: usize,
    slow_dims: usize,
    table: ReiteratedTable,
    cell_cells: usize,
}

impl FlatModel {
    /// Solves the finest-slot cell problem at every lattice point.
    pub fn build(kernel: Arc<dyn Kernel>, per_axis: usize, cell_cells: usize) -> Result<Self> {
        if per_axis < 4 {
            return Err(Error::InvalidInput(format!("slow lattice needs at least 4 points per axis, got {per_axis}")));
        }
        if kernel.depends_on_point() {
            return Err(Error::InvalidInput("reduction needs a kernel without explicit x dependence".into()));
        }
        let slow_dims = (kernel.n_slots() - 1) * kernel.slot_dim();
        let points = slow_lattice(slow_dims, per_axis);
        let x = [0.0; 2];
        let table = reiterated_effective(kernel.as_ref(), &x[..kernel.dim()], &points, cell_cells)?;
        Ok(FlatModel { kernel, per_axis, slow_dims, table, cell_cells })
    }

    pub fn table(&self) -> &ReiteratedTable {
        &self.table
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn provenance(&self) -> FlatProvenance {
        let min_eigenvalue = self
            .table
            .effective
            .iter()
            .map(|e| {
                if e.dim == 1 {
                    e.value[(0, 0)]
                } else {
                    (0.5 * (e.value + e.value.transpose())).symmetric_eigenvalues().min()
                }
            })
            .fold(f64::INFINITY, f64::min);
        FlatProvenance {
            per_axis: self.per_axis,
            slow_dims: self.slow_dims,
            points: self.table.slow_points.len(),
            cell_cells: self.cell_cells,
            min_eigenvalue,
        }
    }

    /// Interpolated effective matrix at slow coordinates `zeta`.
    pub fn a_flat(&self, zeta: &[f64]) -> Mat {
        lattice_weights(&zeta[..self.slow_dims], self.per_axis)
            .iter()
            .fold(Mat::zeros(), |acc, &(k, w)| acc + self.table.effective[k].value * w)
    }

    /// `grad_y chi_j(zeta, t)`, interpolated over the slow lattice; one dimension
    /// evaluates `a_hat/a - 1` exactly in `t`.
    pub fn corrector_gradient(&self, zeta: &[f64], t: &[f64], j: usize) -> [f64; 2] {
        let d = self.kernel.dim();
        if d == 1 {
            let mut ys = vec![0.0; self.slow_dims + 1];
            ys[self.slow_dims] = t[0];
            let mut g = 0.0;
            for (k, w) in lattice_weights(&zeta[..self.slow_dims], self.per_axis) {
                ys[..self.slow_dims].copy_from_slice(&self.table.slow_points[k]);
                let a = self.kernel.eval(&[0.0], &ys)[(0, 0)];
                g += w * (self.table.effective[k].value[(0, 0)] / a - 1.0);
            }
            [g, 0.0]
        } else {
            let mut g = [0.0; 2];
            for (k, w) in lattice_weights(&zeta[..self.slow_dims], self.per_axis) {
                let c = self.table.correctors[k].gradient_at(t, j);
                g[0] += w * c[0];
                g[1] += w * c[1];
            }
            g
        }
    }
}

fn cell_value(g: &GridField, z: &[f64], out: &mut [f64; 2]) {
    // Piecewise constant, extended by zero.
    let d = g.dim;
    *out = [0.0; 2];
    let mut idx = [0usize; 2];
    for a in 0..d {
        let s = (z[a] - g.origin[a]) / g.h;
        if !(s >= 0.0 && s < g.cells as f64) {
            return;
        }
        idx[a] = s as usize;
    }
    let k = g.index(idx[0], idx[1]);
    for (c, o) in out.iter_mut().enumerate().take(d) {
        *o = g.get(k, c);
    }
}

/// Mollifier rule on `[x - eps/2, x + eps/2]` split at the cell faces of `g`
/// (and the ends of its domain), so piecewise constant data is integrated
/// without jump errors. Offsets and weights as in [`Mollifier::rule`].
fn broken_rule_1d(g: &GridField, moll: &Mollifier, eps: f64, x: f64) -> Vec<([f64; 2], f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let nodes = NODES.get_or_init(|| gauss_on(12, 0.0, 1.0));
    let (lo, hi) = (x - 0.5 * eps, x + 0.5 * eps);
    let end = g.origin[0] + g.cells as f64 * g.h;
    let mut cuts = vec![lo];
    let first = ((lo - g.origin[0]) / g.h).ceil().max(0.0) as usize;
    let last = ((hi - g.origin[0]) / g.h).floor().min(g.cells as f64).max(0.0) as usize;
    for i in first..=last {
        let c = g.origin[0] + i as f64 * g.h;
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    for c in [g.origin[0], end] {
        if c > lo && c < hi && !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.total_cmp(b));
    let mut out = Vec::with_capacity(nodes.len() * (cuts.len() - 1));
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        for (s, wt) in nodes {
            let z = w[0] + s * len;
            let off = x - z;
            out.push(([off, 0.0], wt * len * moll.eval(&[off / eps]) / eps));
        }
    }
    let mass: f64 = out.iter().map(|r| r.1).sum();
    out.iter_mut().for_each(|r| r.1 /= mass);
    out
}

fn check_scale(h: f64, scale: f64) -> Result<()> {
    let required = scale / MIN_CELLS_PER_PERIOD;
    if h > required * (1.0 + 1e-12) {
        return Err(Error::UnresolvedScale { h, scale, required });
    }
    Ok(())
}

/// `U(x) = int phi_{eps'_n}(x - z) grad_y chi(z/eps'_1, ..., x/eps'_n) grad u_flat(z) dz`
/// at a point, with `grad u_flat` given as a cell field extended by zero.
pub fn corrector_term_at(model: &FlatModel, scales: &[f64], grad_flat: &GridField, moll: &Mollifier, x: &[f64]) -> [f64; 2] {
    let d = grad_flat.dim;
    let n = scales.len();
    let fine = scales[n - 1];
    let t: Vec<f64> = (0..d).map(|a| frac(x[a] / fine)).collect();
    let mut zeta = vec![0.0; (n - 1) * d];
    let mut g = [0.0; 2];
    let mut out = [0.0; 2];
    let nodes: Vec<([f64; 2], f64)> = if d == 1 { broken_rule_1d(grad_flat, moll, fine, x[0]) } else { moll.rule(fine).collect() };
    for (off, w) in nodes {
        let z = [x[0] - off[0], if d == 2 { x[1] - off[1] } else { 0.0 }];
        cell_value(grad_flat, &z, &mut g);
        if g == [0.0; 2] {
            continue;
        }
        for (i, e) in scales[..n - 1].iter().enumerate() {
            for a in 0..d {
                zeta[i * d + a] = frac(z[a] / e);
            }
        }
        for (j, gj) in g.iter().enumerate().take(d) {
            let c = model.corrector_gradient(&zeta, &t, j);
            for k in 0..d {
                out[k] += w * c[k] * gj;
            }
        }
    }
    out
}

/// Cell means of `U` over the grid of `u_flat` (nodal); two Gauss points per
/// cell in one dimension, the midpoint in two.
pub fn corrector_term_u(model: &FlatModel, u_flat: &GridField, scales: &[f64]) -> Result<GridField> {
    if scales.len() != model.kernel.n_slots() {
        return Err(Error::DimensionMismatch { expected: model.kernel.n_slots(), got: scales.len() });
    }
    check_scale(u_flat.h, *scales.last().unwrap())?;
    let grad = cell_gradient(u_flat);
    let moll = Mollifier::new(u_flat.dim);
    let d = u_flat.dim;
    let pts: Vec<(f64, f64)> = if d == 1 { gauss_on(2, 0.0, 1.0) } else { vec![(0.5, 1.0)] };
    let mut out = grad.like(d);
    let vals: Vec<[f64; 2]> = (0..grad.n_points())
        .into_par_iter()
        .map(|c| {
            let (i, j) = grad.split(c);
            let mut acc = [0.0; 2];
            for &(s, ws) in &pts {
                for &(t, wt) in if d == 1 { &[(0.0, 1.0)][..] } else { &pts[..] } {
                    let x = [grad.origin[0] + (i as f64 + s) * grad.h, grad.origin[1] + (j as f64 + t) * grad.h];
                    let u = corrector_term_at(model, scales, &grad, &moll, &x);
                    acc[0] += ws * wt * u[0];
                    acc[1] += ws * wt * u[1];
                }
            }
            acc
        })
        .collect();
    for (c, v) in vals.iter().enumerate() {
        for k in 0..d {
            out.set(c, k, v[k]);
        }
    }
    Ok(out)
}

/// Settings of [`reduce_one_scale`].
#[derive(Debug, Clone, Copy)]
pub struct ReductionOptions {
    pub center: [f64; 2],
    /// Cells per finest period for `u_eps`, unless `cells` is set.
    pub cells_per_period: f64,
    pub cells: Option<usize>,
    /// Slow lattice points per axis for `A_flat`.
    pub lattice: usize,
    /// Cell-problem resolution per fast period of the reperiodized kernel.
    pub cell_cells_per_period: usize,
    pub tol: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            center: [0.5, 0.5],
            cells_per_period: DEFAULT_CELLS_PER_PERIOD,
            cells: None,
            lattice: 32,
            cell_cells_per_period: 16,
            tol: DEFAULT_TOL,
        }
    }
}

/// Numbers recorded by [`reduce_one_scale`].
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    #[serde(rename = "Q")]
    pub big_q: f64,
    pub scales: Vec<f64>,
    pub center: [f64; 2],
    pub r: f64,
    pub outer_r: f64,
    pub h: f64,
    pub cells: usize,
    /// The kernel ignores its finest slot; no reperiodization was needed.
    pub fast_slot_trivial: bool,
    pub reperiodization: Option<ReperiodizationSummary>,
    /// Scales of `A_flat`, followed by the smoothing scale.
    pub new_scales: Vec<f64>,
    pub smoothing_scale: f64,
    pub flat: Option<FlatProvenance>,
    /// `||grad u_eps||` over `B_r` and `B_2r`.
    pub grad_u_eps: f64,
    pub grad_u_eps_outer: f64,
    pub grad_u_flat: f64,
    /// `||F||` over `B_2r`.
    pub forcing_outer: f64,
    pub corrector_term: f64,
    /// `||grad u_eps - grad u_flat - U||` over `B_r`.
    pub error: f64,
    pub relative_error: f64,
    /// `||grad u_flat||_{B_r} / (||grad u_eps||_{B_2r} + r ||F||_{B_2r})`.
    pub energy_constant: f64,
    pub tau: f64,
    pub sigma_hat: Option<f64>,
    pub bound_proxy: Option<f64>,
    pub solver_tol: f64,
    pub note: String,
}

/// Reduced-problem solution and its report.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub u_eps: GridField,
    pub u_flat: GridField,
    pub corrector_term: GridField,
    pub report: ReductionReport,
}

fn cell_sq_diff(a: &GridField, a_off: [usize; 2], b: &GridField, c: Option<&GridField>) -> f64 {
    let d = b.dim;
    let vol = b.h.powi(d as i32);
    let mut s = 0.0;
    for k in 0..b.n_points() {
        let (i, j) = b.split(k);
        let ka = a.index(i + a_off[0], if d == 2 { j + a_off[1] } else { 0 });
        for comp in 0..d {
            let v = a.get(ka, comp) - b.get(k, comp) - c.map_or(0.0, |c| c.get(k, comp));
            s += v * v;
        }
    }
    s * vol
}

/// Approximates `u_eps` on `B_r` by a problem with at most `n - 1` scales.
///
/// `u_eps` solves the Dirichlet problem for `forcing` on the unit interval or
/// square; `B_r` and `B_2r` are axis-aligned boxes around `opts.center`, and
/// `B_2r` must fit in the unit domain.
pub fn reduce_one_scale(coef: &MultiscaleCoefficient, forcing: &Forcing, r: f64, big_q: f64, opts: &ReductionOptions) -> Result<Reduction> {
    let d = coef.dim();
    let n = coef.n();
    if n < 2 {
        return Err(Error::InvalidInput("reduction needs at least two scales".into()));
    }
    if forcing.is_singular() {
        return Err(Error::InvalidInput("reduction needs an integrable source".into()));
    }
    let c = opts.center;
    if !(r > 0.0) || (0..d).any(|a| c[a] - 2.0 * r < -1e-12 || c[a] + 2.0 * r > 1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("the box of half-width 2r = {} around {:?} must fit in the unit domain", 2.0 * r, &c[..d])));
    }
    let fine = coef.finest();
    let cells = match opts.cells {
        Some(m) => m,
        None => {
            let m = (opts.cells_per_period / fine).ceil() as usize;
            m.div_ceil(8) * 8
        }
    };
    let h = 1.0 / cells as f64;
    check_scale(h, fine)?;
    let lo: Vec<usize> = (0..d).map(|a| ((c[a] - r) / h).round() as usize).collect();
    let hi: Vec<usize> = (0..d).map(|a| ((c[a] + r) / h).round() as usize).collect();
    let inner = hi[0] - lo[0];
    if inner < 2 || (d == 2 && hi[1] - lo[1] != inner) {
        return Err(Error::InvalidInput("grid too coarse for the inner box".into()));
    }
    let r_eff = inner as f64 * h / 2.0;
    let center = [(lo[0] + hi[0]) as f64 * h / 2.0, if d == 2 { (lo[1] + hi[1]) as f64 * h / 2.0 } else { 0.0 }];

    let unit = Domain::unit(d);
    let a_eps = |x: &[f64]| coef.eval(x);
    let u_eps = solve_dirichlet_with(&a_eps, &unit, forcing, cells, opts.tol)?.u;
    let g_eps = cell_gradient(&u_eps);

    // Reduced coefficient.
    let trivial = fast_slot_is_trivial(coef.kernel.as_ref(), 64, 7);
    let (model, new_scales, rep) = if trivial {
        (None, coef.scales.clone(), None)
    } else {
        let rep = reperiodize(coef, big_q)?;
        let q = rep.approx.q as usize;
        let pmax = rep.approx.p.iter().map(|p| p.unsigned_abs() as usize).max().unwrap_or(0);
        let cell_cells = (opts.cell_cells_per_period * q.max(pmax).max(1)).max(32);
        let model = FlatModel::build(rep.sharp.kernel.clone(), opts.lattice, cell_cells)?;
        (Some(model), rep.new_scales.clone(), Some(rep))
    };
    let slow_scales: Vec<f64> = new_scales[..new_scales.len() - 1].to_vec();
    let a_flat = |x: &[f64]| match &model {
        None => coef.eval(x),
        Some(m) => {
            let zeta: Vec<f64> = slow_scales.iter().flat_map(|e| x[..d].iter().map(move |xa| frac(xa / e))).collect();
            m.a_flat(&zeta)
        }
    };

    let boundary_src = Arc::new(u_eps.clone());
    let inner_forcing = Forcing {
        f: forcing.f.clone(),
        big_f: forcing.big_f.clone(),
        boundary: Scalar::func(move |x| {
            let mut v = [0.0];
            sample_into(&boundary_src, x, &mut v);
            v[0]
        }),
    };
    let inner_domain = Domain {
        dim: d,
        origin: [lo[0] as f64 * h, if d == 2 { lo[1] as f64 * h } else { 0.0 }],
        length: inner as f64 * h,
    };
    let u_flat = solve_dirichlet_with(&a_flat, &inner_domain, &inner_forcing, inner, opts.tol)?.u;
    let g_flat = cell_gradient(&u_flat);

    let smoothing_scale = *new_scales.last().unwrap();
    let u_term = match &model {
        None => g_flat.like(d),
        Some(m) => corrector_term_u(m, &u_flat, &new_scales)?,
    };

    let off = [lo[0], if d == 2 { lo[1] } else { 0 }];
    let error = cell_sq_diff(&g_eps, off, &g_flat, Some(&u_term)).sqrt();
    let inner_box = Region::Box { lo: [center[0] - r_eff, center[1] - r_eff], hi: [center[0] + r_eff, center[1] + r_eff] };
    let outer_box = Region::Box {
        lo: [center[0] - 2.0 * r_eff, center[1] - 2.0 * r_eff],
        hi: [center[0] + 2.0 * r_eff, center[1] + 2.0 * r_eff],
    };
    let grad_u_eps = lp_norm(&g_eps, 2.0, &inner_box)?;
    let grad_u_eps_outer = lp_norm(&g_eps, 2.0, &outer_box)?;
    let grad_u_flat = lp_norm(&g_flat, 2.0, &Region::Whole)?;
    let corrector_term = lp_norm(&u_term, 2.0, &Region::Whole)?;
    let mut f_cells = g_eps.like(1);
    f_cells.fill(|p, _| forcing.big_f.value(p));
    let forcing_outer = lp_norm(&f_cells, 2.0, &outer_box)?;
    let denom = grad_u_eps_outer + r_eff * forcing_outer;
    let energy_constant = if denom > 0.0 { grad_u_flat / denom } else { 0.0 };
    let relative_error = if grad_u_eps > 0.0 { error / grad_u_eps } else { error };

    let note = if trivial {
        "finest slot is inactive: A_flat = A and U = 0".to_string()
    } else {
        format!("U smoothed at the reperiodized finest scale {smoothing_scale:e} (q eps_n), not at eps_n")
    };
    let report = ReductionReport {
        big_q,
        scales: coef.scales.clone(),
        center,
        r: r_eff,
        outer_r: 2.0 * r_eff,
        h,
        cells,
        fast_slot_trivial: trivial,
        reperiodization: rep.as_ref().map(|r| r.summary()),
        new_scales,
        smoothing_scale,
        flat: model.as_ref().map(|m| m.provenance()),
        grad_u_eps,
        grad_u_eps_outer,
        grad_u_flat,
        forcing_outer,
        corrector_term,
        error,
        relative_error,
        energy_constant,
        tau: coef.holder.map_or(1.0, |h| h.tau),
        sigma_hat: None,
        bound_proxy: None,
        solver_tol: opts.tol,
        note,
    };
    Ok(Reduction { u_eps, u_flat, corrector_term: u_term, report })
}

/// `Q = (r / eps_n)^(theta / (n - 1))`.
pub fn schedule_q(r: f64, finest: f64, theta: f64, n: usize) -> f64 {
    (r / finest).powf(theta / (n.max(2) - 1) as f64)
}

/// Reductions along a family of coefficients with the `Q` schedule.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionStudy {
    pub theta: f64,
    pub reports: Vec<ReductionReport>,
    /// Fit of `error` against `eps_n`.
    pub rate: Option<RateFit>,
    /// Fit of `error` against `Q^(n-1) eps_n / r`.
    pub sigma_fit: Option<RateFit>,
    /// Errors nonincreasing as `eps_n` decreases, up to 10% per step.
    pub monotone: bool,
    pub max_energy_constant: f64,
}

pub const MONOTONE_SLACK: f64 = 0.10;

/// Runs [`reduce_one_scale`] on each coefficient with the `Q` schedule and
/// fits the error exponents.
pub fn reduction_family(
    family: &[MultiscaleCoefficient],
    forcing: &Forcing,
    r: f64,
    theta: f64,
    opts: &ReductionOptions,
) -> Result<ReductionStudy> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {theta}")));
    }
    let mut reports = Vec::with_capacity(family.len());
    for coef in family {
        let q = schedule_q(r, coef.finest(), theta, coef.n());
        reports.push(reduce_one_scale(coef, forcing, r, q, opts)?.report);
    }
    reports.sort_by(|a, b| b.scales.last().unwrap().partial_cmp(a.scales.last().unwrap()).unwrap());
    let monotone = reports.windows(2).all(|w| w[1].error <= (1.0 + MONOTONE_SLACK) * w[0].error);
    let rate = fit_rate(&reports.iter().map(|r| (*r.scales.last().unwrap(), r.error)).collect::<Vec<_>>()).ok();
    let proxy = |rep: &ReductionReport| {
        let n = rep.scales.len();
        rep.big_q.powi(n as i32 - 1) * rep.scales[n - 1] / rep.r
    };
    let sigma_fit = fit_rate(&reports.iter().map(|r| (proxy(r), r.error)).collect::<Vec<_>>()).ok();
    if let Some(fit) = sigma_fit {
        for rep in &mut reports {
            rep.sigma_hat = Some(fit.slope);
            rep.bound_proxy = Some(proxy(rep).powf(fit.slope) + rep.big_q.powf(-rep.tau));
        }
    }
    let max_energy_constant = reports.iter().map(|r| r.energy_constant).fold(0.0, f64::max);
    Ok(ReductionStudy { theta, reports, rate, sigma_fit, monotone, max_energy_constant })
}

/// Settings of [`rate_locally_periodic`].
#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    pub cells_per_period: f64,
    pub min_cells: usize,
    /// Spacing of the table of effective matrices in `x`.
    pub table_spacing: f64,
    pub cell_cells: usize,
    pub tol: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { cells_per_period: 32.0, min_cells: 256, table_spacing: 1.0 / 512.0, cell_cells: 32, tol: DEFAULT_TOL }
    }
}

/// One row of a locally periodic rate table.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub eps: f64,
    pub h: f64,
    /// `||u_eps - u_0||_{L^2}`.
    pub l2_error: f64,
    /// `||grad u_eps - grad u_0 - S_eps(grad_y chi grad u_0)||_{L^2}`.
    pub corrected_error: f64,
    /// `eps ||grad u_0||`.
    pub bulk_term: f64,
    /// `eps ||grad^2 u_0||` away from the layer of width `3 eps`.
    pub hessian_term: f64,
    /// `||grad u_0||` over the layer of width `4 eps`.
    pub layer_term: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub l2_fit: Option<RateFit>,
    pub corrected_fit: Option<RateFit>,
    /// Errors at solver precision; slopes are meaningless.
    pub degenerate: bool,
    pub note: Option<String>,
}

/// Effective matrices of a one-slot point-dependent kernel tabulated over
/// `[-1/2, 3/2]^d`, with (bi)linear interpolation.
struct SlowTable {
    dim: usize,
    spacing: f64,
    side: usize,
    a_hat: Vec<Mat>,
    correctors: Vec<crate::cell::CorrectorField>,
}

impl SlowTable {
    fn build(k: &dyn Kernel, spacing: f64, cell_cells: usize) -> Result<Self> {
        let d = k.dim();
        let side = (2.0 / spacing).round() as usize + 1;
        let spacing = 2.0 / (side - 1) as f64;
        let total = side.pow(d as u32);
        let point = |m: usize| [-0.5 + (m % side) as f64 * spacing, -0.5 + (m / side) as f64 * spacing];
        if d == 1 {
            let a_hat: Vec<Mat> = (0..total)
                .into_par_iter()
                .map(|m| {
                    let x = point(m);
                    let inv = integrate(&|y: f64| 1.0 / k.eval(&x[..1], &[y])[(0, 0)], 0.0, 1.0, 1e-13);
                    Mat::new(1.0 / inv, 0.0, 0.0, 0.0)
                })
                .collect();
            Ok(SlowTable { dim: 1, spacing, side, a_hat, correctors: Vec::new() })
        } else {
            let res: Vec<Result<_>> = (0..total).into_par_iter().map(|m| solve_frozen(k, &point(m), &[], cell_cells)).collect();
            let mut a_hat = Vec::with_capacity(total);
            let mut correctors = Vec::with_capacity(total);
            for r in res {
                let (c, e) = r?;
                a_hat.push(e.value);
                correctors.push(c);
            }
            Ok(SlowTable { dim: 2, spacing, side, a_hat, correctors })
        }
    }

    fn weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out = vec![(0usize, 1.0)];
        let mut stride = 1;
        for &xa in &x[..self.dim] {
            let s = ((xa + 0.5) / self.spacing).clamp(0.0, (self.side - 1) as f64);
            let i = (s.floor() as usize).min(self.side - 2);
            let u = s - i as f64;
            out = out.iter().flat_map(|&(k, a)| [(k + i * stride, a * (1.0 - u)), (k + (i + 1) * stride, a * u)]).collect();
            stride *= self.side;
        }
        out
    }

    fn a_hat(&self, x: &[f64]) -> Mat {
        self.weights(x).iter().fold(Mat::zeros(), |acc, &(k, w)| acc + self.a_hat[k] * w)
    }
}

fn nodal_hessian(u: &GridField) -> GridField {
    let d = u.dim;
    let mut out = u.like(if d == 1 { 1 } else { 4 });
    let n = u.cells;
    let h2 = u.h * u.h;
    for k in 0..u.n_points() {
        let (i, j) = u.split(k);
        if i == 0 || i == n || (d == 2 && (j == 0 || j == n)) {
            continue;
        }
        let v = |di: isize, dj: isize| u.values[u.index((i as isize + di) as usize, (j as isize + dj) as usize)];
        if d == 1 {
            out.set(k, 0, (v(1, 0) - 2.0 * v(0, 0) + v(-1, 0)) / h2);
        } else {
            let xy = (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / (4.0 * h2);
            out.set(k, 0, (v(1, 0) - 2.0 * v(0, 0) + v(-1, 0)) / h2);
            out.set(k, 1, xy);
            out.set(k, 2, xy);
            out.set(k, 3, (v(0, 1) - 2.0 * v(0, 0) + v(0, -1)) / h2);
        }
    }
    out
}

/// Below this the L^2 errors are treated as solver noise.
pub const DEGENERATE_ERROR: f64 = 1e-10;

/// Convergence of `u_eps` for `-div(A(x, x/eps) grad u) = F` on the unit
/// interval or square towards the homogenized solution.
///
/// `coef` has one slot; its kernel may depend on `x`. Its scale is replaced by
/// each entry of `eps_list`, which must hold at least four geometrically
/// spaced values.
pub fn rate_locally_periodic(coef: &MultiscaleCoefficient, forcing: &Forcing, eps_list: &[f64], opts: &RateOptions) -> Result<RateTable> {
    if coef.n() != 1 {
        return Err(Error::InvalidInput(format!("locally periodic coefficient has one slot, got {}", coef.n())));
    }
    if eps_list.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least four values of eps, got {}", eps_list.len())));
    }
    let ratios: Vec<f64> = eps_list.windows(2).map(|w| w[1] / w[0]).collect();
    if eps_list.iter().any(|e| !(*e > 0.0)) || ratios.iter().any(|q| (q / ratios[0] - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidInput("eps values must be positive and geometrically spaced".into()));
    }
    if forcing.is_singular() {
        return Err(Error::InvalidInput("rate study needs an integrable source".into()));
    }
    let d = coef.dim();
    let k = coef.kernel.as_ref();
    // A y-independent kernel is its own homogenization.
    let trivial = fast_slot_is_trivial(k, 64, 7);
    let table = SlowTable::build(k, opts.table_spacing, opts.cell_cells)?;
    let unit = Domain::unit(d);
    let moll = Mollifier::new(d);
    let a0 = |x: &[f64]| if trivial { k.eval(x, &[0.0; 2][..d]) } else { table.a_hat(x) };

    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cells = ((opts.cells_per_period / eps).ceil() as usize).max(opts.min_cells);
        let h = 1.0 / cells as f64;
        let c_eps = coef.with_scales(vec![eps])?;
        let a_eps = |x: &[f64]| c_eps.eval(x);
        let u_eps = solve_dirichlet_with(&a_eps, &unit, forcing, cells, opts.tol)?.u;
        let u0 = solve_dirichlet_with(&a0, &unit, forcing, cells, opts.tol)?.u;
        let mut diff = u_eps.clone();
        diff.values.iter_mut().zip(&u0.values).for_each(|(a, b)| *a -= b);
        let l2_error = lp_norm(&diff, 2.0, &Region::Whole)?;

        let g_eps = cell_gradient(&u_eps);
        let g0 = cell_gradient(&u0);
        // Gradient of u_0 extended by its nearest boundary cell.
        let grad0_at = |z: &[f64]| {
            let mut idx = [0usize; 2];
            for a in 0..d {
                idx[a] = ((z[a] / h).floor().max(0.0) as usize).min(cells - 1);
            }
            let kk = g0.index(idx[0], idx[1]);
            [g0.get(kk, 0), if d == 2 { g0.get(kk, 1) } else { 0.0 }]
        };
        let chi_grad = |z: &[f64], y: &[f64], j: usize| -> [f64; 2] {
            if trivial {
                [0.0; 2]
            } else if d == 1 {
                let a = k.eval(&z[..1], &y[..1])[(0, 0)];
                [table.a_hat(z)[(0, 0)] / a - 1.0, 0.0]
            } else {
                let mut g = [0.0; 2];
                for (m, w) in table.weights(z) {
                    let c = table.correctors[m].gradient_at(y, j);
                    g[0] += w * c[0];
                    g[1] += w * c[1];
                }
                g
            }
        };
        let pts: Vec<(f64, f64)> = if d == 1 { gauss_on(2, 0.0, 1.0) } else { vec![(0.5, 1.0)] };
        let sq: f64 = (0..g_eps.n_points())
            .into_par_iter()
            .map(|cidx| {
                let (i, j) = g_eps.split(cidx);
                let mut mean = [0.0; 2];
                let inner: &[(f64, f64)] = if d == 1 { &[(0.0, 1.0)] } else { &pts };
                for &(s, ws) in &pts {
                    for &(t, wt) in inner {
                        let x = [(i as f64 + s) * h, (j as f64 + t) * h];
                        let y = [frac(x[0] / eps), frac(x[1] / eps)];
                        let mut u = [0.0; 2];
                        for (off, w) in moll.rule(eps) {
                            let z = [x[0] - off[0], x[1] - off[1]];
                            let g = grad0_at(&z);
                            for (jj, gj) in g.iter().enumerate().take(d) {
                                let c = chi_grad(&z, &y, jj);
                                for kk in 0..d {
                                    u[kk] += w * c[kk] * gj;
                                }
                            }
                        }
                        mean[0] += ws * wt * u[0];
                        mean[1] += ws * wt * u[1];
                    }
                }
                (0..d).map(|a| (g_eps.get(cidx, a) - g0.get(cidx, a) - mean[a]).powi(2)).sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let corrected_error = (sq * h.powi(d as i32)).sqrt();

        let grad_u0 = lp_norm(&g0, 2.0, &Region::Whole)?;
        let hess = nodal_hessian(&u0);
        let away = Region::Box { lo: [3.0 * eps; 2], hi: [1.0 - 3.0 * eps; 2] };
        let hessian_term = if 3.0 * eps < 0.5 { eps * lp_norm(&hess, 2.0, &away)? } else { 0.0 };
        let layer_term = lp_norm(&g0, 2.0, &Region::Layer { t: 4.0 * eps })?;
        rows.push(RateRow { eps, h, l2_error, corrected_error, bulk_term: eps * grad_u0, hessian_term, layer_term });
    }

    let degenerate = rows.iter().all(|r| r.l2_error < DEGENERATE_ERROR);
    let (l2_fit, corrected_fit, note) = if degenerate {
        (None, None, Some("errors at solver precision; the coefficient does not oscillate".to_string()))
    } else {
        let l2 = fit_rate(&rows.iter().map(|r| (r.eps, r.l2_error)).collect::<Vec<_>>()).ok();
        let cg = fit_rate(&rows.iter().map(|r| (r.eps, r.corrected_error)).collect::<Vec<_>>()).ok();
        (l2, cg, None)
    };
    Ok(RateTable { rows, l2_fit, corrected_fit, degenerate, note })
}
