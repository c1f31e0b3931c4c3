//! Periodic cell problems `-div(A (e_j + grad chi_j)) = 0` on the unit torus
//! and the effective matrices `int A (I + grad chi)`.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{frac, Kernel, Mat};
use crate::error::{Error, Result};
use crate::grid::{GridField, Location};
use crate::linalg::{bicgstab, pcg, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::q1::{center_gradient, mean_gradient, PeriodicOp, Stencil};
use crate::quadrature::integrate;

/// Sampled corrector `chi_j`, `j = 1..d`.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    /// Values on periodic nodes, component `j`.
    pub values: GridField,
    /// `d_k chi_j` stored as component `j * d + k`; periodic nodes in one
    /// dimension, cell centers in two.
    pub gradient: GridField,
    /// `|mean chi_j|` per component.
    pub mean_residual: Vec<f64>,
}

impl CorrectorField {
    fn zero(dim: usize, cells: usize) -> Self {
        let h = 1.0 / cells as f64;
        let grad_loc = if dim == 1 { Location::Periodic } else { Location::Cell };
        CorrectorField {
            values: GridField::zeros(dim, [0.0, 0.0], h, cells, Location::Periodic, dim),
            gradient: GridField::zeros(dim, [0.0, 0.0], h, cells, grad_loc, dim * dim),
            mean_residual: vec![0.0; dim],
        }
    }

    /// `|| grad_y chi ||_{L^2(Y)}` over all components.
    pub fn energy(&self) -> f64 {
        let n = self.gradient.n_points() as f64;
        (self.gradient.values.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    pub fn max_mean_residual(&self) -> f64 {
        self.mean_residual.iter().fold(0.0, |a, b| a.max(*b))
    }

    /// `grad_y chi_j` at `y`, by nearest sample.
    pub fn gradient_at(&self, y: &[f64], j: usize) -> [f64; 2] {
        let d = self.values.dim;
        let n = self.gradient.cells;
        let idx = |t: f64| {
            let s = if d == 2 { frac(t) * n as f64 - 0.5 } else { frac(t) * n as f64 };
            (s.round() as isize).rem_euclid(n as isize) as usize
        };
        let k = if d == 1 { idx(y[0]) } else { self.gradient.index(idx(y[0]), idx(y[1])) };
        let mut g = [0.0; 2];
        for (c, gc) in g.iter_mut().enumerate().take(d) {
            *gc = self.gradient.get(k, j * d + c);
        }
        g
    }
}

/// Effective matrix with the resolution it was computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveMatrix {
    #[serde(serialize_with = "ser_mat")]
    pub value: Mat,
    pub dim: usize,
    pub h: f64,
    pub tol: f64,
}

fn ser_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(2))?;
    seq.serialize_element(&[m[(0, 0)], m[(0, 1)]])?;
    seq.serialize_element(&[m[(1, 0)], m[(1, 1)]])?;
    seq.end()
}

impl EffectiveMatrix {
    /// Smallest `xi . A xi` over `count` random unit vectors.
    pub fn min_rayleigh(&self, count: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let xi = if self.dim == 1 {
                    Vector2::new(1.0, 0.0)
                } else {
                    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                    Vector2::new(t.cos(), t.sin())
                };
                xi.dot(&(self.value * xi))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

const ELLIPTIC_SAMPLES: usize = 4096;
const QUAD_TOL: f64 = 1e-14;

/// One-dimensional cell problem; `chi' = a_hat / a - 1`.
///
/// `cells` sets the sampling grid of `chi` and the panels used for the
/// quadrature; use at least a few dozen panels per oscillation of `a`.
pub fn solve_cell_1d(a: &(dyn Fn(f64) -> f64 + Sync), cells: usize) -> Result<(CorrectorField, EffectiveMatrix)> {
    if cells == 0 {
        return Err(Error::InvalidInput("need at least one cell".into()));
    }
    let probes = ELLIPTIC_SAMPLES.max(4 * cells);
    let samples: Vec<f64> = (0..probes).map(|i| a(i as f64 / probes as f64)).collect();
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonElliptic { min });
    }
    let h = 1.0 / cells as f64;
    if samples.iter().all(|v| *v == samples[0]) {
        let eff = EffectiveMatrix { value: Mat::new(samples[0], 0.0, 0.0, 0.0), dim: 1, h, tol: 0.0 };
        return Ok((CorrectorField::zero(1, cells), eff));
    }
    let inv = |y: f64| 1.0 / a(y);
    let panels: Vec<f64> = (0..cells).map(|i| integrate(&inv, i as f64 * h, (i + 1) as f64 * h, QUAD_TOL * h)).collect();
    let total: f64 = panels.iter().sum();
    let a_hat = 1.0 / total;

    let mut field = CorrectorField::zero(1, cells);
    // chi(y_i) = a_hat int_0^{y_i} 1/a - y_i
    let mut acc = 0.0;
    for (i, p) in panels.iter().enumerate() {
        let y = i as f64 * h;
        field.values.values[i] = a_hat * acc - y;
        field.gradient.values[i] = a_hat / a(y) - 1.0;
        acc += p;
    }
    let mean = field.values.values.iter().sum::<f64>() / cells as f64;
    field.values.values.iter_mut().for_each(|v| *v -= mean);
    field.mean_residual[0] = (field.values.values.iter().sum::<f64>() / cells as f64).abs();
    let eff = EffectiveMatrix { value: Mat::new(a_hat, 0.0, 0.0, 0.0), dim: 1, h, tol: QUAD_TOL };
    Ok((field, eff))
}

/// Two-dimensional cell problem on a periodic `cells x cells` grid.
///
/// Bilinear elements with the coefficient sampled at cell centers; the
/// effective matrix uses the midpoint rule, which is exact for the discrete
/// corrector.
pub fn solve_cell_2d(a: &(dyn Fn(&[f64]) -> Mat + Sync), cells: usize) -> Result<(CorrectorField, EffectiveMatrix)> {
    solve_cell_2d_tol(a, cells, DEFAULT_TOL)
}

pub fn solve_cell_2d_tol(
    a: &(dyn Fn(&[f64]) -> Mat + Sync),
    cells: usize,
    tol: f64,
) -> Result<(CorrectorField, EffectiveMatrix)> {
    if cells < 2 {
        return Err(Error::InvalidInput("need at least two cells per side".into()));
    }
    let h = 1.0 / cells as f64;
    let center = |i: usize, j: usize| [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
    let coef: Vec<Mat> = (0..cells * cells).into_par_iter().map(|c| a(&center(c % cells, c / cells))).collect();
    let min = coef
        .iter()
        .map(|m| {
            let s = 0.5 * (m + m.transpose());
            s.symmetric_eigenvalues().min()
        })
        .fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonElliptic { min });
    }
    let st = Stencil::assemble(cells, true, &|i, j| coef[j * cells + i]);
    let op = PeriodicOp(&st);
    let n = cells * cells;
    let corners = |i: usize, j: usize| {
        let (i1, j1) = ((i + 1) % cells, (j + 1) % cells);
        [j * cells + i, j * cells + i1, j1 * cells + i, j1 * cells + i1]
    };

    let mut field = CorrectorField::zero(2, cells);
    let mut a_hat = Mat::zeros();
    for jdir in 0..2 {
        let mut b = vec![0.0; n];
        for cj in 0..cells {
            for ci in 0..cells {
                let m = coef[cj * cells + ci];
                let flux = [m[(0, jdir)], m[(1, jdir)]];
                for (la, node) in corners(ci, cj).iter().enumerate() {
                    let g = mean_gradient(la);
                    b[*node] -= (flux[0] * g[0] + flux[1] * g[1]) * h;
                }
            }
        }
        let mut chi = vec![0.0; n];
        if st.symmetric {
            pcg(&op, &b, &mut chi, tol, DEFAULT_MAX_ITER, true)?;
        } else {
            bicgstab(&op, &b, &mut chi, tol, DEFAULT_MAX_ITER, true)?;
        }
        let mean = chi.iter().sum::<f64>() / n as f64;
        chi.iter_mut().for_each(|v| *v -= mean);
        field.mean_residual[jdir] = (chi.iter().sum::<f64>() / n as f64).abs();
        for (k, v) in chi.iter().enumerate() {
            field.values.set(k, jdir, *v);
        }
        let mut col = Vector2::zeros();
        for cj in 0..cells {
            for ci in 0..cells {
                let c = corners(ci, cj);
                let g = center_gradient([chi[c[0]], chi[c[1]], chi[c[2]], chi[c[3]]], h);
                let k = cj * cells + ci;
                field.gradient.set(k, jdir * 2, g[0]);
                field.gradient.set(k, jdir * 2 + 1, g[1]);
                let mut e = Vector2::new(g[0], g[1]);
                e[jdir] += 1.0;
                col += coef[k] * e;
            }
        }
        col *= h * h;
        a_hat[(0, jdir)] = col[0];
        a_hat[(1, jdir)] = col[1];
    }
    Ok((field, EffectiveMatrix { value: a_hat, dim: 2, h, tol }))
}

/// Cell problem for a kernel frozen at the given slow point in its last slot.
pub fn solve_frozen(k: &dyn Kernel, x: &[f64], slow: &[f64], cells: usize) -> Result<(CorrectorField, EffectiveMatrix)> {
    let sd = k.slot_dim();
    let d = k.dim();
    if slow.len() + sd != k.n_slots() * sd {
        return Err(Error::DimensionMismatch { expected: (k.n_slots() - 1) * sd, got: slow.len() });
    }
    let x = x.to_vec();
    let slow = slow.to_vec();
    if d == 1 {
        let f = move |t: f64| {
            let mut ys = slow.clone();
            ys.push(t);
            k.eval(&x, &ys)[(0, 0)]
        };
        solve_cell_1d(&f, cells)
    } else {
        let f = move |y: &[f64]| {
            let mut ys = slow.clone();
            ys.extend_from_slice(y);
            k.eval(&x, &ys)
        };
        solve_cell_2d(&f, cells)
    }
}

/// Effective matrices of the last-slot cell problems on a slow lattice.
#[derive(Debug, Clone)]
pub struct ReiteratedTable {
    pub slow_points: Vec<Vec<f64>>,
    pub effective: Vec<EffectiveMatrix>,
    pub correctors: Vec<CorrectorField>,
}

/// Solves the cell problem in `y_n` at every slow point, in parallel.
///
/// The physical point passed to point-dependent kernels is `x`.
pub fn reiterated_effective(k: &dyn Kernel, x: &[f64], slow_points: &[Vec<f64>], cells: usize) -> Result<ReiteratedTable> {
    let results: Vec<Result<(CorrectorField, EffectiveMatrix)>> =
        slow_points.par_iter().map(|z| solve_frozen(k, x, z, cells)).collect();
    let mut effective = Vec::with_capacity(results.len());
    let mut correctors = Vec::with_capacity(results.len());
    for r in results {
        let (c, e) = r?;
        effective.push(e);
        correctors.push(c);
    }
    Ok(ReiteratedTable { slow_points: slow_points.to_vec(), effective, correctors })
}

/// Uniform lattice with `per_axis` points on each of `dims` torus axes.
pub fn slow_lattice(dims: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(dims as u32);
    (0..total)
        .map(|mut k| {
            (0..dims)
                .map(|_| {
                    let i = k % per_axis;
                    k /= per_axis;
                    i as f64 / per_axis as f64
                })
                .collect()
        })
        .collect()
}
