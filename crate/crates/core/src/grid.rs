//! Uniform tensor grids on an interval or rectangle with homogeneous
//! Dirichlet boundary. Grid functions are stored on every node (boundary
//! included) in row-major order, `idx = i + j * (nx + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extent: [f64; 2],
    h: [f64; 2],
    weights: Vec<f64>,
}

impl Grid {
    pub fn new_1d(length: f64, cells: usize) -> Result<Self> {
        Self::new(1, [length, 0.0], [cells, 0])
    }

    pub fn new_2d(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(2, [lx, ly], [nx, ny])
    }

    fn new(dim: usize, extent: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        for d in 0..dim {
            if cells[d] < 2 {
                return Err(Error::validation(
                    "grid.cells",
                    "need at least 2 cells per axis",
                ));
            }
            if !(extent[d] > 0.0) {
                return Err(Error::validation("grid.length", "extent must be positive"));
            }
        }
        let mut h = [0.0; 2];
        for d in 0..dim {
            h[d] = extent[d] / cells[d] as f64;
        }
        let mut g = Grid {
            dim,
            cells,
            extent,
            h,
            weights: Vec::new(),
        };
        g.weights = g.build_weights();
        Ok(g)
    }

    fn build_weights(&self) -> Vec<f64> {
        let axis = |d: usize, i: usize| {
            if self.dim <= d {
                1.0
            } else if i == 0 || i == self.cells[d] {
                0.5 * self.h[d]
            } else {
                self.h[d]
            }
        };
        (0..self.len())
            .map(|k| {
                let (i, j) = self.ij(k);
                axis(0, i) * axis(1, j)
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.h
    }

    /// Smallest spacing over the active axes.
    pub fn h_min(&self) -> f64 {
        self.h[..self.dim]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn measure(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    fn row(&self) -> usize {
        self.cells[0] + 1
    }

    pub fn len(&self) -> usize {
        let ny = if self.dim == 2 { self.cells[1] + 1 } else { 1 };
        self.row() * ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.row(), k / self.row())
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (i as f64 * self.h[0], j as f64 * self.h[1])
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.ij(k);
        i == 0 || i == self.cells[0] || (self.dim == 2 && (j == 0 || j == self.cells[1]))
    }

    /// Indices of interior (free) nodes.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    /// Trapezoid quadrature weights on all nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Samples an expression at every node at time `t`.
    pub fn sample(&self, e: &Expr, t: f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (x, y) = self.coords(k);
                e.eval(x, y, t)
            })
            .collect()
    }

    /// Samples an expression and zeroes the boundary nodes.
    pub fn sample_dirichlet(&self, e: &Expr, t: f64) -> Vec<f64> {
        let mut v = self.sample(e, t);
        self.pin_boundary(&mut v);
        v
    }

    pub fn pin_boundary(&self, v: &mut [f64]) {
        for (k, x) in v.iter_mut().enumerate() {
            if self.is_boundary(k) {
                *x = 0.0;
            }
        }
    }

    /// Trapezoid integral of a grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Weighted `L²` inner product.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    pub fn norm_sq(&self, a: &[f64]) -> f64 {
        self.dot(a, a)
    }

    /// Discrete Dirichlet form `Σ_edges (a_p - a_q)(b_p - b_q) / h² · cell measure`.
    /// Equals `-(Δ_h a, b)` whenever `a` and `b` vanish on the boundary.
    pub fn grad_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let row = self.row();
        let cell = self.h[..self.dim].iter().product::<f64>();
        let mut acc = 0.0;
        let ny = if self.dim == 2 { self.cells[1] } else { 0 };
        // x edges
        let inv_hx2 = 1.0 / (self.h[0] * self.h[0]);
        for j in 0..=ny {
            let wy = if self.dim == 2 && (j == 0 || j == ny) {
                0.5
            } else {
                1.0
            };
            let base = j * row;
            let mut s = 0.0;
            for i in 0..self.cells[0] {
                let k = base + i;
                s += (a[k + 1] - a[k]) * (b[k + 1] - b[k]);
            }
            acc += wy * s * inv_hx2;
        }
        if self.dim == 2 {
            let inv_hy2 = 1.0 / (self.h[1] * self.h[1]);
            for j in 0..ny {
                let base = j * row;
                for i in 0..row {
                    let wx = if i == 0 || i == self.cells[0] {
                        0.5
                    } else {
                        1.0
                    };
                    let k = base + i;
                    acc += wx * (a[k + row] - a[k]) * (b[k + row] - b[k]) * inv_hy2;
                }
            }
        }
        acc * cell
    }

    pub fn grad_norm_sq(&self, a: &[f64]) -> f64 {
        self.grad_dot(a, a)
    }

    /// Second-order Laplacian (3-point in 1D, 5-point in 2D) on interior
    /// nodes; boundary entries of `out` are set to zero.
    pub fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let row = self.row();
        let inv_hx2 = 1.0 / (self.h[0] * self.h[0]);
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.dim == 1 {
            for i in 1..self.cells[0] {
                out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_hx2;
            }
        } else {
            let inv_hy2 = 1.0 / (self.h[1] * self.h[1]);
            for j in 1..self.cells[1] {
                let base = j * row;
                for i in 1..self.cells[0] {
                    let k = base + i;
                    out[k] = (u[k - 1] - 2.0 * u[k] + u[k + 1]) * inv_hx2
                        + (u[k - row] - 2.0 * u[k] + u[k + row]) * inv_hy2;
                }
            }
        }
    }

    /// Smallest eigenvalue of `-Δ_h` with Dirichlet boundary (closed form).
    pub fn dirichlet_lambda_min(&self) -> f64 {
        (0..self.dim)
            .map(|d| {
                let s = (std::f64::consts::PI * self.h[d] / (2.0 * self.extent[d])).sin();
                4.0 / (self.h[d] * self.h[d]) * s * s
            })
            .sum()
    }

    /// Largest eigenvalue of `-Δ_h` (closed form).
    pub fn dirichlet_lambda_max(&self) -> f64 {
        (0..self.dim)
            .map(|d| {
                let n = self.cells[d] as f64;
                let s = (std::f64::consts::PI * (n - 1.0) / (2.0 * n)).sin();
                4.0 / (self.h[d] * self.h[d]) * s * s
            })
            .sum()
    }

    /// Solves `-Δ_h x = b` on interior nodes (Thomas algorithm in 1D,
    /// conjugate gradients in 2D). Boundary entries of `b` are ignored.
    pub fn solve_poisson(&self, b: &[f64]) -> Vec<f64> {
        if self.dim == 1 {
            self.thomas(b)
        } else {
            self.cg(b)
        }
    }

    fn thomas(&self, b: &[f64]) -> Vec<f64> {
        let n = self.cells[0] - 1;
        let inv_h2 = 1.0 / (self.h[0] * self.h[0]);
        let (diag, off) = (2.0 * inv_h2, -inv_h2);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let denom = if i == 0 { diag } else { diag - off * c[i - 1] };
            c[i] = off / denom;
            let prev = if i == 0 { 0.0 } else { d[i - 1] };
            d[i] = (b[i + 1] - off * prev) / denom;
        }
        let mut x = vec![0.0; n + 2];
        for i in (0..n).rev() {
            let next = if i + 1 < n { x[i + 2] } else { 0.0 };
            x[i + 1] = d[i] - c[i] * next;
        }
        x
    }

    fn cg(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut rhs = b.to_vec();
        self.pin_boundary(&mut rhs);
        let apply = |v: &[f64], out: &mut [f64]| {
            self.laplacian(v, out);
            out.iter_mut().for_each(|x| *x = -*x);
        };
        let plain = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; n];
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = plain(&r, &r);
        let stop = 1e-26 * rr.max(1e-300);
        for _ in 0..10 * n {
            if rr <= stop {
                break;
            }
            apply(&p, &mut ap);
            let alpha = rr / plain(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = plain(&r, &r);
            let beta = rr_new / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
        }
        x
    }
}
