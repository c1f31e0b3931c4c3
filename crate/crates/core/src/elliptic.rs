//! Dirichlet problems `-div(A_eps grad u) = div f + F` on an interval or a
//! square, and discrete gradients.
//!
//! One dimension uses linear elements whose cell coefficient is the harmonic
//! average of `a` over the cell, solved directly. Two dimensions use bilinear
//! elements with the coefficient sampled at cell centers, solved by
//! preconditioned Krylov iterations.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{FieldExpr, Mat, MultiscaleCoefficient};
use crate::error::{Error, Result};
use crate::grid::{GridField, Location};
use crate::linalg::{bicgstab, pcg, solve_tridiagonal, LinearOperator, SolveStats, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::q1::{center_gradient, mean_gradient, InteriorOp, Stencil};
use crate::quadrature::gauss_on;

/// Cells per finest period required unless overridden.
pub const MIN_CELLS_PER_PERIOD: f64 = 8.0;

/// Cells per finest period used when the caller does not choose.
pub const DEFAULT_CELLS_PER_PERIOD: f64 = 16.0;

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar source term or boundary datum.
#[derive(Clone, Default)]
pub enum Scalar {
    #[default]
    Zero,
    Func(PointFn),
    /// Unit point mass at the given point.
    Dirac([f64; 2]),
}

impl Scalar {
    pub fn func(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Scalar::Func(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Scalar::func(move |_| c)
    }

    pub fn expr(e: FieldExpr) -> Self {
        Scalar::func(move |x| e.eval(x, 0))
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            Scalar::Func(f) => f(x),
            _ => 0.0,
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Zero => write!(f, "Zero"),
            Scalar::Func(_) => write!(f, "Func"),
            Scalar::Dirac(p) => write!(f, "Dirac({p:?})"),
        }
    }
}

type VectorFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;

/// Vector source `f` in `div f`.
#[derive(Clone, Default)]
pub enum Vector {
    #[default]
    Zero,
    Func(VectorFn),
}

impl Vector {
    pub fn func(f: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Vector::Func(Arc::new(f))
    }

    pub fn expr(e: FieldExpr) -> Self {
        Vector::func(move |x| {
            let mut v = [0.0; 2];
            for (c, vc) in v.iter_mut().enumerate().take(e.components()) {
                *vc = e.eval(x, c);
            }
            v
        })
    }

    pub(crate) fn value(&self, x: &[f64]) -> [f64; 2] {
        match self {
            Vector::Zero => [0.0; 2],
            Vector::Func(f) => f(x),
        }
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vector::Zero => write!(f, "Zero"),
            Vector::Func(_) => write!(f, "Func"),
        }
    }
}

/// Right-hand side and boundary data.
#[derive(Debug, Clone, Default)]
pub struct Forcing {
    pub f: Vector,
    pub big_f: Scalar,
    pub boundary: Scalar,
}

impl Forcing {
    pub fn is_singular(&self) -> bool {
        matches!(self.big_f, Scalar::Dirac(_))
    }
}

/// The interval `[origin, origin + length]` or the square with that corner
/// and side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    pub dim: usize,
    pub origin: [f64; 2],
    pub length: f64,
}

impl Domain {
    pub fn unit(dim: usize) -> Self {
        Domain { dim, origin: [0.0, 0.0], length: 1.0 }
    }

    /// Interval or square centered at `c` with half-width `r`.
    pub fn centered(dim: usize, c: [f64; 2], r: f64) -> Self {
        Domain { dim, origin: [c[0] - r, if dim == 2 { c[1] - r } else { 0.0 }], length: 2.0 * r }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub cells: usize,
    pub allow_unresolved: bool,
    pub tol: f64,
}

impl SolveOptions {
    pub fn new(cells: usize) -> Self {
        SolveOptions { cells, allow_unresolved: false, tol: DEFAULT_TOL }
    }

    /// Default resolution: sixteen cells per finest period, at least `min`.
    pub fn resolving(coef: &MultiscaleCoefficient, domain: &Domain, min: usize) -> Self {
        let cells = (domain.length * DEFAULT_CELLS_PER_PERIOD / coef.finest()).ceil() as usize;
        Self::new(cells.max(min))
    }

    pub fn unresolved(mut self) -> Self {
        self.allow_unresolved = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridField,
    pub stats: SolveStats,
}

fn check_resolution(coef: &MultiscaleCoefficient, h: f64, opts: &SolveOptions) -> Result<()> {
    let scale = coef.finest();
    let required = scale / MIN_CELLS_PER_PERIOD;
    if h > required * (1.0 + 1e-12) && !opts.allow_unresolved {
        return Err(Error::UnresolvedScale { h, scale, required });
    }
    Ok(())
}

/// Solves the Dirichlet problem on `domain`.
pub fn solve_dirichlet(coef: &MultiscaleCoefficient, domain: &Domain, forcing: &Forcing, opts: &SolveOptions) -> Result<Solution> {
    if coef.dim() != domain.dim {
        return Err(Error::DimensionMismatch { expected: domain.dim, got: coef.dim() });
    }
    if opts.cells < 2 {
        return Err(Error::InvalidInput("need at least two cells".into()));
    }
    let h = domain.length / opts.cells as f64;
    check_resolution(coef, h, opts)?;
    match domain.dim {
        1 => solve_1d(&|x: &[f64]| coef.eval(x)[(0, 0)], domain, forcing, opts.cells),
        _ => solve_2d(&|x: &[f64]| coef.eval(x), domain, forcing, opts.cells, opts.tol),
    }
}

/// Same as [`solve_dirichlet`] for a coefficient given pointwise.
pub fn solve_dirichlet_with(
    a: &(dyn Fn(&[f64]) -> Mat + Sync),
    domain: &Domain,
    forcing: &Forcing,
    cells: usize,
    tol: f64,
) -> Result<Solution> {
    match domain.dim {
        1 => solve_1d(&|x: &[f64]| a(x)[(0, 0)], domain, forcing, cells),
        2 => solve_2d(a, domain, forcing, cells, tol),
        d => Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {d}"))),
    }
}

fn solve_1d(a: &(dyn Fn(&[f64]) -> f64 + Sync), domain: &Domain, forcing: &Forcing, cells: usize) -> Result<Solution> {
    let h = domain.length / cells as f64;
    let x0 = domain.origin[0];
    let gauss = gauss_on(4, 0.0, 1.0);
    // Harmonic cell averages and cell data.
    let per_cell: Vec<(f64, f64, [f64; 2])> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let left = x0 + c as f64 * h;
            let mut inv = 0.0;
            let mut fbar = 0.0;
            let mut load = [0.0; 2];
            for &(t, w) in &gauss {
                let x = [left + t * h];
                inv += w / a(&x);
                fbar += w * forcing.f.value(&x)[0];
                let big_f = forcing.big_f.value(&x);
                load[0] += w * big_f * (1.0 - t) * h;
                load[1] += w * big_f * t * h;
            }
            (1.0 / inv, fbar, load)
        })
        .collect();
    if let Some((c, _)) = per_cell.iter().map(|p| p.0).enumerate().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonElliptic { min: per_cell[c].0 });
    }

    let n = cells + 1;
    let mut rhs = vec![0.0; n];
    for (c, (_, fbar, load)) in per_cell.iter().enumerate() {
        rhs[c] += load[0] + fbar;
        rhs[c + 1] += load[1] - fbar;
    }
    if let Scalar::Dirac(p) = forcing.big_f {
        let s = (p[0] - x0) / h;
        if s >= 0.0 && s <= cells as f64 {
            let c = (s.floor() as usize).min(cells - 1);
            let t = s - c as f64;
            rhs[c] += 1.0 - t;
            rhs[c + 1] += t;
        }
    }
    let g0 = forcing.boundary.value(&[x0]);
    let g1 = forcing.boundary.value(&[x0 + domain.length]);

    let m = cells - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut b = vec![0.0; m];
    for k in 0..m {
        let node = k + 1;
        let (al, ar) = (per_cell[node - 1].0 / h, per_cell[node].0 / h);
        diag[k] = al + ar;
        lower[k] = -al;
        upper[k] = -ar;
        b[k] = rhs[node];
    }
    b[0] += per_cell[0].0 / h * g0;
    b[m - 1] += per_cell[cells - 1].0 / h * g1;
    let interior = solve_tridiagonal(&lower, &diag, &upper, &b);

    let mut u = GridField::zeros(1, [x0, 0.0], h, cells, Location::Node, 1);
    u.values[0] = g0;
    u.values[cells] = g1;
    u.values[1..cells].copy_from_slice(&interior);
    Ok(Solution { u, stats: SolveStats { iterations: 1, residual: 0.0 } })
}

fn solve_2d(a: &(dyn Fn(&[f64]) -> Mat + Sync), domain: &Domain, forcing: &Forcing, cells: usize, tol: f64) -> Result<Solution> {
    let h = domain.length / cells as f64;
    let o = domain.origin;
    let center = |i: usize, j: usize| [o[0] + (i as f64 + 0.5) * h, o[1] + (j as f64 + 0.5) * h];
    let gauss = gauss_on(2, 0.0, 1.0);
    let cell_data: Vec<(Mat, [f64; 2], [f64; 4])> = (0..cells * cells)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c % cells, c / cells);
            let m = a(&center(i, j));
            let mut fbar = [0.0; 2];
            let mut load = [0.0; 4];
            for &(s, ws) in &gauss {
                for &(t, wt) in &gauss {
                    let x = [o[0] + (i as f64 + s) * h, o[1] + (j as f64 + t) * h];
                    let w = ws * wt;
                    let fv = forcing.f.value(&x);
                    fbar[0] += w * fv[0];
                    fbar[1] += w * fv[1];
                    let bf = forcing.big_f.value(&x) * w * h * h;
                    load[0] += bf * (1.0 - s) * (1.0 - t);
                    load[1] += bf * s * (1.0 - t);
                    load[2] += bf * (1.0 - s) * t;
                    load[3] += bf * s * t;
                }
            }
            (m, fbar, load)
        })
        .collect();
    let min = cell_data
        .iter()
        .map(|(m, _, _)| (0.5 * (m + m.transpose())).symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonElliptic { min });
    }
    let st = Stencil::assemble(cells, false, &|i, j| cell_data[j * cells + i].0);
    let side = cells + 1;
    let mut rhs = vec![0.0; side * side];
    for (c, (_, fbar, load)) in cell_data.iter().enumerate() {
        let (i, j) = (c % cells, c / cells);
        let nodes = [j * side + i, j * side + i + 1, (j + 1) * side + i, (j + 1) * side + i + 1];
        for (la, node) in nodes.iter().enumerate() {
            let g = mean_gradient(la);
            rhs[*node] += load[la] - (fbar[0] * g[0] + fbar[1] * g[1]) * h;
        }
    }
    if let Scalar::Dirac(p) = forcing.big_f {
        let (s, t) = ((p[0] - o[0]) / h, (p[1] - o[1]) / h);
        if (0.0..=cells as f64).contains(&s) && (0.0..=cells as f64).contains(&t) {
            let (i, j) = ((s.floor() as usize).min(cells - 1), (t.floor() as usize).min(cells - 1));
            let (fs, ft) = (s - i as f64, t - j as f64);
            rhs[j * side + i] += (1.0 - fs) * (1.0 - ft);
            rhs[j * side + i + 1] += fs * (1.0 - ft);
            rhs[(j + 1) * side + i] += (1.0 - fs) * ft;
            rhs[(j + 1) * side + i + 1] += fs * ft;
        }
    }

    let mut u = GridField::zeros(2, o, h, cells, Location::Node, 1);
    let on_boundary = |k: usize| {
        let (i, j) = (k % side, k / side);
        i == 0 || j == 0 || i == cells || j == cells
    };
    for k in 0..side * side {
        if on_boundary(k) {
            let p = u.point(k);
            u.values[k] = forcing.boundary.value(&p);
        }
    }
    // Move the boundary values to the right side.
    let mut lifted = vec![0.0; side * side];
    let bvals: Vec<f64> = (0..side * side).map(|k| if on_boundary(k) { u.values[k] } else { 0.0 }).collect();
    if bvals.iter().any(|v| *v != 0.0) {
        for (k, l) in lifted.iter_mut().enumerate() {
            *l = st.apply_row(k, &bvals);
        }
    }

    let op = InteriorOp { st: &st };
    let m = cells - 1;
    let b: Vec<f64> = (0..m * m)
        .map(|q| {
            let k = op.node_of(q);
            rhs[k] - lifted[k]
        })
        .collect();
    let mut x = vec![0.0; op.len()];
    let stats = if st.symmetric {
        pcg(&op, &b, &mut x, tol, DEFAULT_MAX_ITER, false)?
    } else {
        bicgstab(&op, &b, &mut x, tol, DEFAULT_MAX_ITER, false)?
    };
    for (q, v) in x.iter().enumerate() {
        u.values[op.node_of(q)] = *v;
    }
    Ok(Solution { u, stats })
}

/// Nodal gradient: central differences inside, one-sided on the boundary.
pub fn gradient(u: &GridField) -> GridField {
    let mut g = u.like(u.dim);
    let n = u.per_side();
    let h = u.h;
    let diff = |k_minus: usize, k_plus: usize, span: f64| (u.values[k_plus] - u.values[k_minus]) / span;
    for k in 0..u.n_points() {
        let (i, j) = u.split(k);
        for axis in 0..u.dim {
            let (pos, step) = if axis == 0 { (i, 1) } else { (j, n) };
            let v = if pos == 0 {
                diff(k, k + step, h)
            } else if pos == n - 1 {
                diff(k - step, k, h)
            } else {
                diff(k - step, k + step, 2.0 * h)
            };
            g.set(k, axis, v);
        }
    }
    g
}

/// Gradient of the piecewise (bi)linear interpolant at cell centers.
pub fn cell_gradient(u: &GridField) -> GridField {
    let mut g = GridField::zeros(u.dim, u.origin, u.h, u.cells, Location::Cell, u.dim);
    let side = u.per_side();
    for c in 0..g.n_points() {
        if u.dim == 1 {
            g.values[c] = (u.values[c + 1] - u.values[c]) / u.h;
        } else {
            let (i, j) = (c % u.cells, c / u.cells);
            let v = [
                u.values[j * side + i],
                u.values[j * side + i + 1],
                u.values[(j + 1) * side + i],
                u.values[(j + 1) * side + i + 1],
            ];
            let gr = center_gradient(v, u.h);
            g.set(c, 0, gr[0]);
            g.set(c, 1, gr[1]);
        }
    }
    g
}

/// Successive-difference convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub h: Vec<f64>,
    /// Max-norm difference between level `k` and `k + 1` at shared nodes.
    pub diffs: Vec<f64>,
    pub order: Option<f64>,
    pub r_squared: Option<f64>,
    pub note: Option<String>,
}

/// Solves at each resolution in `cells` (each a multiple of the previous) and
/// fits the observed order of the successive differences.
pub fn refine_study(
    solve: &(dyn Fn(usize) -> Result<GridField> + Sync),
    cells: &[usize],
    singular: bool,
) -> Result<ConvergenceTable> {
    if cells.len() < 3 {
        return Err(Error::InvalidInput("a refinement study needs at least three levels".into()));
    }
    if cells.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
        return Err(Error::InvalidInput("each level must refine the previous one by an integer factor".into()));
    }
    let fields: Vec<GridField> = cells.par_iter().map(|&n| solve(n)).collect::<Result<_>>()?;
    let mut diffs = Vec::new();
    for w in fields.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let r = fine.cells / coarse.cells;
        let mut worst = 0.0f64;
        for k in 0..coarse.n_points() {
            let (i, j) = coarse.split(k);
            let kf = fine.index(i * r, j * r);
            worst = worst.max((coarse.values[k] - fine.values[kf]).abs());
        }
        diffs.push(worst);
    }
    let h: Vec<f64> = fields.iter().map(|f| f.h).collect();
    let mut table = ConvergenceTable { h: h.clone(), diffs: diffs.clone(), order: None, r_squared: None, note: None };
    if singular {
        table.note = Some("singular forcing: no order claimed".into());
        return Ok(table);
    }
    let pairs: Vec<(f64, f64)> = h[..h.len() - 1].iter().copied().zip(diffs).collect();
    match crate::reduction::fit_rate(&pairs) {
        Ok(fit) => {
            table.order = Some(fit.slope);
            table.r_squared = Some(fit.r_squared);
        }
        Err(e) => table.note = Some(format!("no order: {e}")),
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_with_breaks;
    use std::f64::consts::PI;

    fn constant(dim: usize, c: f64, scale: f64) -> MultiscaleCoefficient {
        MultiscaleCoefficient::from_expr(&c.to_string(), dim, vec![scale], 0.1).unwrap()
    }

    fn unit_load() -> Forcing {
        Forcing { big_f: Scalar::constant(1.0), ..Default::default() }
    }

    #[test]
    fn parabola_1d() {
        let coef = constant(1, 1.0, 1.0);
        let s = solve_dirichlet(&coef, &Domain::unit(1), &unit_load(), &SolveOptions::new(64)).unwrap();
        for k in 0..=64 {
            let x = k as f64 / 64.0;
            assert!((s.u.values[k] - x * (1.0 - x) / 2.0).abs() < 1e-13);
        }
        let g = gradient(&s.u);
        for k in 1..64 {
            let x = k as f64 / 64.0;
            assert!((g.values[k] - (1.0 - 2.0 * x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillating_1d_against_quadrature() {
        let eps = 1.0 / 32.0;
        let coef = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![eps], 1.0 / 3.0).unwrap();
        let cells = 64 * 32;
        let s = solve_dirichlet(&coef, &Domain::unit(1), &unit_load(), &SolveOptions::new(cells)).unwrap();
        // a u' = C - x, u(0) = u(1) = 0.
        let a = |x: f64| 2.0 + (2.0 * PI * x / eps).sin();
        let breaks: Vec<f64> = (1..32).map(|k| k as f64 * eps).collect();
        let i0 = integrate_with_breaks(&|t| 1.0 / a(t), 0.0, 1.0, &breaks, 1e-14);
        let i1 = integrate_with_breaks(&|t| t / a(t), 0.0, 1.0, &breaks, 1e-14);
        let c = i1 / i0;
        let mut worst = 0.0f64;
        for k in (0..=cells).step_by(16) {
            let x = k as f64 / cells as f64;
            let exact = integrate_with_breaks(&|t| (c - t) / a(t), 0.0, x, &breaks, 1e-15);
            worst = worst.max((s.u.values[k] - exact).abs());
        }
        assert!(worst < 1e-6, "nodal error {worst}");
    }

    #[test]
    fn manufactured_2d() {
        let coef = constant(2, 1.0, 1.0);
        let forcing = Forcing {
            big_f: Scalar::func(|x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()),
            ..Default::default()
        };
        let mut errs = Vec::new();
        for cells in [16, 32, 64] {
            let s = solve_dirichlet(&coef, &Domain::unit(2), &forcing, &SolveOptions::new(cells)).unwrap();
            let mut e2 = 0.0;
            for k in 0..s.u.n_points() {
                let p = s.u.point(k);
                e2 += (s.u.values[k] - (PI * p[0]).sin() * (PI * p[1]).sin()).powi(2);
            }
            errs.push((e2 / s.u.n_points() as f64).sqrt());
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 1.8 && r2 > 1.8, "{errs:?}");
    }

    #[test]
    fn linear_boundary_data_is_reproduced() {
        let coef = constant(2, 3.0, 1.0);
        let forcing = Forcing { boundary: Scalar::func(|x| 1.0 + 2.0 * x[0] - x[1]), ..Default::default() };
        let d = Domain { dim: 2, origin: [-0.5, 0.25], length: 1.5 };
        let s = solve_dirichlet(&coef, &d, &forcing, &SolveOptions::new(12)).unwrap();
        for k in 0..s.u.n_points() {
            let p = s.u.point(k);
            assert!((s.u.values[k] - (1.0 + 2.0 * p[0] - p[1])).abs() < 1e-9);
        }
        let g = gradient(&s.u);
        for k in 0..g.n_points() {
            assert!((g.get(k, 0) - 2.0).abs() < 1e-8 && (g.get(k, 1) + 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn divergence_forcing_1d() {
        // -u'' = f' = 1 for f = x.
        let coef = constant(1, 1.0, 1.0);
        let forcing = Forcing { f: Vector::func(|x| [x[0], 0.0]), ..Default::default() };
        let s = solve_dirichlet(&coef, &Domain::unit(1), &forcing, &SolveOptions::new(32)).unwrap();
        for k in 0..=32 {
            let x = k as f64 / 32.0;
            assert!((s.u.values[k] - x * (1.0 - x) / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn divergence_forcing_2d_matches_scalar_forcing() {
        let coef = constant(2, 1.0, 1.0);
        let a = Forcing { f: Vector::func(|x| [x[0], x[1]]), ..Default::default() };
        let b = Forcing { big_f: Scalar::constant(2.0), ..Default::default() };
        let sa = solve_dirichlet(&coef, &Domain::unit(2), &a, &SolveOptions::new(16)).unwrap();
        let sb = solve_dirichlet(&coef, &Domain::unit(2), &b, &SolveOptions::new(16)).unwrap();
        let diff = sa.u.values.iter().zip(&sb.u.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "{diff}");
    }

    #[test]
    fn unresolved_scale() {
        let coef = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![0.01], 0.3).unwrap();
        let r = solve_dirichlet(&coef, &Domain::unit(1), &unit_load(), &SolveOptions::new(100));
        assert!(matches!(r, Err(Error::UnresolvedScale { .. })));
        assert!(solve_dirichlet(&coef, &Domain::unit(1), &unit_load(), &SolveOptions::new(100).unresolved()).is_ok());
    }

    #[test]
    fn maximum_principle_and_linearity_1d() {
        let coef = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)*cos(2*pi*y2)", 1, vec![0.1, 0.013], 0.3).unwrap();
        let opts = SolveOptions::resolving(&coef, &Domain::unit(1), 64);
        let f1 = Forcing { big_f: Scalar::func(|x| 1.0 + x[0]), ..Default::default() };
        let f2 = Forcing { f: Vector::func(|x| [(3.0 * x[0]).sin(), 0.0]), ..Default::default() };
        let f12 = Forcing {
            big_f: Scalar::func(|x| 2.0 * (1.0 + x[0])),
            f: Vector::func(|x| [-(3.0 * x[0]).sin(), 0.0]),
            ..Default::default()
        };
        let u1 = solve_dirichlet(&coef, &Domain::unit(1), &f1, &opts).unwrap().u;
        assert!(u1.values.iter().all(|v| *v >= 0.0));
        let u2 = solve_dirichlet(&coef, &Domain::unit(1), &f2, &opts).unwrap().u;
        let u12 = solve_dirichlet(&coef, &Domain::unit(1), &f12, &opts).unwrap().u;
        for k in 0..u1.n_points() {
            assert!((u12.values[k] - (2.0 * u1.values[k] - u2.values[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_estimate_2d() {
        let coef =
            MultiscaleCoefficient::from_expr("2 + cos(2*pi*y1[1])*cos(2*pi*y1[2])", 2, vec![0.125], 1.0 / 3.0).unwrap();
        let forcing = Forcing { f: Vector::func(|x| [(5.0 * x[1]).cos(), x[0]]), ..Default::default() };
        let s = solve_dirichlet(&coef, &Domain::unit(2), &forcing, &SolveOptions::new(64)).unwrap();
        let g = cell_gradient(&s.u);
        let h2 = g.h * g.h;
        let grad = (0..g.n_points()).map(|k| g.magnitude(k).powi(2) * h2).sum::<f64>().sqrt();
        let fnorm = (0..g.n_points())
            .map(|k| {
                let p = g.point(k);
                ((5.0 * p[1]).cos().powi(2) + p[0] * p[0]) * h2
            })
            .sum::<f64>()
            .sqrt();
        assert!(grad <= fnorm / coef.lambda, "{grad} vs {fnorm}");
    }

    #[test]
    fn gradient_of_sine() {
        let mut u = GridField::zeros(1, [0.0, 0.0], 1.0 / 64.0, 64, Location::Node, 1);
        u.fill(|p, _| (PI * p[0]).sin());
        let g = gradient(&u);
        let err = (1..64).map(|k| (g.values[k] - PI * (PI * k as f64 / 64.0).cos()).abs()).fold(0.0, f64::max);
        assert!(err < 2e-3);
        let mut u2 = GridField::zeros(2, [0.0, 0.0], 0.1, 10, Location::Node, 1);
        u2.fill(|p, _| p[0]);
        let g2 = gradient(&u2);
        for k in 0..g2.n_points() {
            assert!((g2.get(k, 0) - 1.0).abs() < 1e-12 && g2.get(k, 1).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_constant_coefficient() {
        let coef = constant(2, 1.0, 1.0);
        let forcing = Forcing { big_f: Scalar::func(|x| (3.0 * x[0]).exp() * x[1]), ..Default::default() };
        let solve = |n: usize| Ok(solve_dirichlet(&coef, &Domain::unit(2), &forcing, &SolveOptions::new(n))?.u);
        let t = refine_study(&solve, &[16, 32, 64, 128], false).unwrap();
        let p = t.order.unwrap();
        assert!((p - 2.0).abs() < 0.1, "{t:?}");
    }

    #[test]
    fn refine_rough_multiscale() {
        let coef = MultiscaleCoefficient::from_expr("2 + sin(2*pi*y1)", 1, vec![0.25], 1.0 / 3.0).unwrap();
        let solve = |n: usize| Ok(solve_dirichlet(&coef, &Domain::unit(1), &unit_load(), &SolveOptions::new(n))?.u);
        let t = refine_study(&solve, &[32, 64, 128, 256], false).unwrap();
        assert!(t.order.unwrap() >= 1.0, "{t:?}");
    }

    #[test]
    fn refine_singular_forcing_is_flagged() {
        let coef = constant(1, 1.0, 1.0);
        let forcing = Forcing { big_f: Scalar::Dirac([1.0 / 3.0, 0.0]), ..Default::default() };
        assert!(forcing.is_singular());
        let solve = |n: usize| Ok(solve_dirichlet(&coef, &Domain::unit(1), &forcing, &SolveOptions::new(n))?.u);
        let t = refine_study(&solve, &[8, 16, 32], true).unwrap();
        assert!(t.order.is_none());
        assert!(t.note.is_some());
        assert!(refine_study(&solve, &[8, 16], true).is_err());
    }
}
