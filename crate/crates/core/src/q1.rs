//! Bilinear (Q1) finite elements on uniform square grids with one constant
//! coefficient matrix per cell, assembled into nine-point stencils.

use rayon::prelude::*;

use crate::coefficients::Mat;
use crate::linalg::LinearOperator;

const PAR_THRESHOLD: usize = 4096;

/// Local node order: (0,0), (1,0), (0,1), (1,1).
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn ref_gradient(a: usize, s: f64, t: f64) -> [f64; 2] {
    match a {
        0 => [-(1.0 - t), -(1.0 - s)],
        1 => [1.0 - t, -s],
        2 => [-t, 1.0 - s],
        _ => [t, s],
    }
}

/// `int_cell grad phi_a . A grad phi_b`; independent of `h` in two dimensions.
pub(crate) fn element_matrix(a: &Mat) -> [[f64; 4]; 4] {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let mut k = [[0.0; 4]; 4];
    for &s in &pts {
        for &t in &pts {
            let grads: Vec<[f64; 2]> = (0..4).map(|n| ref_gradient(n, s, t)).collect();
            for i in 0..4 {
                for j in 0..4 {
                    let gj = grads[j];
                    let agj = [a[(0, 0)] * gj[0] + a[(0, 1)] * gj[1], a[(1, 0)] * gj[0] + a[(1, 1)] * gj[1]];
                    k[i][j] += 0.25 * (grads[i][0] * agj[0] + grads[i][1] * agj[1]);
                }
            }
        }
    }
    k
}

/// `int_cell grad phi_a`, divided by `h`.
pub(crate) fn mean_gradient(a: usize) -> [f64; 2] {
    let (i, j) = CORNERS[a];
    [if i == 1 { 0.5 } else { -0.5 }, if j == 1 { 0.5 } else { -0.5 }]
}

/// Gradient at the cell center from the four corner values.
pub(crate) fn center_gradient(v: [f64; 4], h: f64) -> [f64; 2] {
    [((v[1] - v[0]) + (v[3] - v[2])) / (2.0 * h), ((v[2] - v[0]) + (v[3] - v[1])) / (2.0 * h)]
}

/// Nine-point stencil for every node; offset index `(dy + 1) * 3 + (dx + 1)`.
pub(crate) struct Stencil {
    pub cells: usize,
    pub periodic: bool,
    pub side: usize,
    pub rows: Vec<[f64; 9]>,
    pub symmetric: bool,
}

impl Stencil {
    /// `coef(i, j)` is the matrix of cell `(i, j)`.
    pub fn assemble(cells: usize, periodic: bool, coef: &(dyn Fn(usize, usize) -> Mat + Sync)) -> Self {
        let side = if periodic { cells } else { cells + 1 };
        let mut rows = vec![[0.0; 9]; side * side];
        let mut symmetric = true;
        let mats: Vec<Mat> = (0..cells * cells).into_par_iter().map(|c| coef(c % cells, c / cells)).collect();
        for (c, a) in mats.iter().enumerate() {
            let (ci, cj) = (c % cells, c / cells);
            if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-14 * a.amax() {
                symmetric = false;
            }
            let k = element_matrix(a);
            for (la, &(ai, aj)) in CORNERS.iter().enumerate() {
                let (ni, nj) = ((ci + ai) % side, (cj + aj) % side);
                let row = &mut rows[nj * side + ni];
                for (lb, &(bi, bj)) in CORNERS.iter().enumerate() {
                    let dx = bi as isize - ai as isize;
                    let dy = bj as isize - aj as isize;
                    row[((dy + 1) * 3 + dx + 1) as usize] += k[la][lb];
                }
            }
        }
        Stencil { cells, periodic, side, rows, symmetric }
    }

    fn neighbor(&self, i: usize, j: usize, o: usize) -> Option<usize> {
        let dx = (o % 3) as isize - 1;
        let dy = (o / 3) as isize - 1;
        let s = self.side as isize;
        let (mut ni, mut nj) = (i as isize + dx, j as isize + dy);
        if self.periodic {
            ni = ni.rem_euclid(s);
            nj = nj.rem_euclid(s);
        } else if ni < 0 || nj < 0 || ni >= s || nj >= s {
            return None;
        }
        Some(nj as usize * self.side + ni as usize)
    }

    /// Row `k` applied to a full nodal vector.
    pub fn apply_row(&self, k: usize, x: &[f64]) -> f64 {
        let (i, j) = (k % self.side, k / self.side);
        let row = &self.rows[k];
        let mut acc = 0.0;
        for (o, w) in row.iter().enumerate() {
            if *w != 0.0 {
                if let Some(n) = self.neighbor(i, j, o) {
                    acc += w * x[n];
                }
            }
        }
        acc
    }
}

/// The periodic operator on all nodes.
pub(crate) struct PeriodicOp<'a>(pub &'a Stencil);

impl LinearOperator for PeriodicOp<'_> {
    fn len(&self) -> usize {
        self.0.rows.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(k, yk)| *yk = self.0.apply_row(k, x));
        } else {
            y.iter_mut().enumerate().for_each(|(k, yk)| *yk = self.0.apply_row(k, x));
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r[4]).collect()
    }
}

/// The Dirichlet operator restricted to interior nodes.
pub(crate) struct InteriorOp<'a> {
    pub st: &'a Stencil,
}

impl InteriorOp<'_> {
    pub fn m(&self) -> usize {
        self.st.cells - 1
    }

    pub fn node_of(&self, u: usize) -> usize {
        let m = self.m();
        (u / m + 1) * self.st.side + (u % m + 1)
    }

    fn row(&self, u: usize, x: &[f64]) -> f64 {
        let m = self.m() as isize;
        let (i, j) = ((u % self.m()) as isize, (u / self.m()) as isize);
        let row = &self.st.rows[self.node_of(u)];
        let mut acc = 0.0;
        for (o, w) in row.iter().enumerate() {
            let (ni, nj) = (i + (o % 3) as isize - 1, j + (o / 3) as isize - 1);
            if ni >= 0 && nj >= 0 && ni < m && nj < m {
                acc += w * x[(nj * m + ni) as usize];
            }
        }
        acc
    }
}

impl LinearOperator for InteriorOp<'_> {
    fn len(&self) -> usize {
        self.m() * self.m()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if y.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(u, yu)| *yu = self.row(u, x));
        } else {
            y.iter_mut().enumerate().for_each(|(u, yu)| *yu = self.row(u, x));
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|u| self.st.rows[self.node_of(u)][4]).collect()
    }
}
