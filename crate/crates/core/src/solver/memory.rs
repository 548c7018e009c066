//! Discrete memory convolution `Qⁿ = Σ_j c_j g(tₙ - t_j) Δ_h u^j` with
//! trapezoid weights `c_0 = c_n = dt/2`, `c_j = dt` otherwise.
//!
//! Besides `Q`, the solver needs (when diagnostics are on) the companion
//! fields `P = Σ c_j g(tₙ - t_j) u^j` and `R = Σ c_j g'(tₙ - t_j) Δ_h u^j`
//! and a handful of scalar convolutions of `‖∇u^j‖²`.

use nalgebra::{DMatrix, DMatrixView};

use super::prony::PronyApprox;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Reference trapezoid evaluation of `Q` at `tₙ = (len - 1)·dt` from the
/// full Laplacian history.
pub fn memory_direct(kernel: &KernelSpec, dt: f64, lap_history: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(last) = lap_history.last() else {
        return Err(Error::MissingHistory(
            "memory convolution needs at least one level".into(),
        ));
    };
    let n = lap_history.len() - 1;
    let mut q = vec![0.0; last.len()];
    if n == 0 {
        return Ok(q);
    }
    for (j, lap) in lap_history.iter().enumerate() {
        if lap.len() != q.len() {
            return Err(Error::Shape {
                expected: q.len(),
                got: lap.len(),
            });
        }
        let c = if j == 0 || j == n { 0.5 * dt } else { dt };
        let w = c * kernel.value((n - j) as f64 * dt);
        q.iter_mut().zip(lap).for_each(|(a, b)| *a += w * b);
    }
    Ok(q)
}

/// Scalar convolutions at the current level.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct MemoryScalars {
    /// `Σ c_j g(tₙ - t_j)`: the quadrature of `∫_0^t g`.
    pub g_int: f64,
    /// `Σ c_j g'(tₙ - t_j)`.
    pub dg_int: f64,
    /// `Σ c_j g(tₙ - t_j) ‖∇u^j‖²`.
    pub s: f64,
    /// `Σ c_j g'(tₙ - t_j) ‖∇u^j‖²`.
    pub s_dg: f64,
    /// `Σ c_j I(tₙ - t_j) ‖∇u^j‖²`.
    pub i1: f64,
}

/// Sum-of-exponentials recurrence: one auxiliary field per mode,
/// `ψⁿ = e^{-θ dt} ψⁿ⁻¹ + (dt/2)(e^{-θ dt} Xⁿ⁻¹ + Xⁿ)`, `ψ⁰ = 0`.
#[derive(Debug, Clone)]
pub struct MemoryFast {
    weights: Vec<f64>,
    rates: Vec<f64>,
    decay: Vec<f64>,
    dt: f64,
    nodes: usize,
    psi: Vec<f64>,
    phi: Vec<f64>,
    gam: Vec<f64>,
    sig: Vec<f64>,
    prev_lap: Vec<f64>,
    prev_u: Vec<f64>,
    prev_gn2: f64,
    levels: usize,
    track_u: bool,
}

impl MemoryFast {
    pub fn new(approx: &PronyApprox, dt: f64, nodes: usize) -> Self {
        Self::with_u_history(approx, dt, nodes, false)
    }

    pub(crate) fn with_u_history(
        approx: &PronyApprox,
        dt: f64,
        nodes: usize,
        track_u: bool,
    ) -> Self {
        let m = approx.modes();
        MemoryFast {
            weights: approx.weights.clone(),
            rates: approx.rates.clone(),
            decay: approx.rates.iter().map(|th| (-th * dt).exp()).collect(),
            dt,
            nodes,
            psi: vec![0.0; m * nodes],
            phi: if track_u {
                vec![0.0; m * nodes]
            } else {
                vec![]
            },
            gam: vec![0.0; m],
            sig: vec![0.0; m],
            prev_lap: vec![0.0; nodes],
            prev_u: vec![0.0; if track_u { nodes } else { 0 }],
            prev_gn2: 0.0,
            levels: 0,
            track_u,
        }
    }

    /// Advances the mode states with the Laplacian at the next level.
    pub fn push(&mut self, lap: &[f64]) {
        self.push_level(lap, &[], 0.0);
    }

    pub(crate) fn push_level(&mut self, lap: &[f64], u: &[f64], gn2: f64) {
        let h = 0.5 * self.dt;
        let n = self.nodes;
        if self.levels > 0 {
            for m in 0..self.weights.len() {
                let e = self.decay[m];
                let psi = &mut self.psi[m * n..(m + 1) * n];
                for k in 0..n {
                    psi[k] = e * psi[k] + h * (e * self.prev_lap[k] + lap[k]);
                }
                if self.track_u {
                    let phi = &mut self.phi[m * n..(m + 1) * n];
                    for k in 0..n {
                        phi[k] = e * phi[k] + h * (e * self.prev_u[k] + u[k]);
                    }
                }
                self.gam[m] = e * self.gam[m] + h * (e + 1.0);
                self.sig[m] = e * self.sig[m] + h * (e * self.prev_gn2 + gn2);
            }
        }
        self.prev_lap.copy_from_slice(lap);
        if self.track_u {
            self.prev_u.copy_from_slice(u);
        }
        self.prev_gn2 = gn2;
        self.levels += 1;
    }

    /// `Q = Σ w_m ψ_m` at the latest level.
    pub fn q(&self) -> Result<Vec<f64>> {
        if self.levels == 0 {
            return Err(Error::MissingHistory(
                "fast memory has no mode state yet".into(),
            ));
        }
        let mut q = vec![0.0; self.nodes];
        self.combine(&self.psi, |w, _| w, &mut q);
        Ok(q)
    }

    fn combine(&self, states: &[f64], coef: impl Fn(f64, f64) -> f64, out: &mut [f64]) {
        let n = self.nodes;
        out.iter_mut().for_each(|v| *v = 0.0);
        for m in 0..self.weights.len() {
            let c = coef(self.weights[m], self.rates[m]);
            let s = &states[m * n..(m + 1) * n];
            out.iter_mut().zip(s).for_each(|(o, v)| *o += c * v);
        }
    }

    fn scalars(&self) -> MemoryScalars {
        let mut out = MemoryScalars::default();
        for m in 0..self.weights.len() {
            let (w, th) = (self.weights[m], self.rates[m]);
            out.g_int += w * self.gam[m];
            out.dg_int -= w * th * self.gam[m];
            out.s += w * self.sig[m];
            out.s_dg -= w * th * self.sig[m];
            out.i1 += w / th * self.sig[m];
        }
        out
    }
}

const BLOCK: usize = 32;

/// Direct trapezoid convolution over the stored history. Contributions of
/// levels before the current block are produced for the whole block at once
/// by a matrix product, which keeps the quadratic cost cache friendly.
#[derive(Debug, Clone)]
pub(crate) struct MemoryDirect {
    nodes: usize,
    dt: f64,
    diag: bool,
    lap: Vec<f64>,
    uh: Vec<f64>,
    gn2: Vec<f64>,
    g_lag: Vec<f64>,
    dg_lag: Vec<f64>,
    i_lag: Vec<f64>,
    g_prefix: Vec<f64>,
    dg_prefix: Vec<f64>,
    block_start: usize,
    far_q: DMatrix<f64>,
    far_r: DMatrix<f64>,
    far_p: DMatrix<f64>,
}

impl MemoryDirect {
    pub(crate) fn new(
        kernel: &KernelSpec,
        dt: f64,
        nodes: usize,
        steps: usize,
        diag: bool,
    ) -> Result<Self> {
        let lags = steps + BLOCK + 2;
        let g_lag: Vec<f64> = (0..lags).map(|k| kernel.value(k as f64 * dt)).collect();
        let dg_lag: Vec<f64> = (0..lags)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    kernel.derivative(k as f64 * dt)
                }
            })
            .collect();
        let i_lag = if diag {
            tail_table(kernel, dt, lags)?
        } else {
            vec![]
        };
        // prefix sums for Σ_{k<m} g_lag[k]
        let prefix = |v: &[f64]| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(v.len() + 1);
            out.push(0.0);
            for x in v {
                acc += x;
                out.push(acc);
            }
            out
        };
        let g_prefix = prefix(&g_lag);
        let dg_prefix = prefix(&dg_lag);
        let cap = (steps + 2) * nodes;
        Ok(MemoryDirect {
            nodes,
            dt,
            diag,
            lap: Vec::with_capacity(cap),
            uh: Vec::with_capacity(if diag { cap } else { 0 }),
            gn2: Vec::with_capacity(steps + 2),
            g_lag,
            dg_lag,
            i_lag,
            g_prefix,
            dg_prefix,
            block_start: 0,
            far_q: DMatrix::zeros(nodes, BLOCK),
            far_r: DMatrix::zeros(nodes, if diag { BLOCK } else { 0 }),
            far_p: DMatrix::zeros(nodes, if diag { BLOCK } else { 0 }),
        })
    }

    fn levels(&self) -> usize {
        self.gn2.len()
    }

    pub(crate) fn push_level(&mut self, lap: &[f64], u: &[f64], gn2: f64) {
        self.lap.extend_from_slice(lap);
        if self.diag {
            self.uh.extend_from_slice(u);
        }
        self.gn2.push(gn2);
    }

    fn weight(&self, j: usize, n: usize) -> f64 {
        if j == 0 || j == n {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    fn refresh_far(&mut self, n0: usize) {
        self.block_start = n0;
        let nodes = self.nodes;
        let h = DMatrixView::from_slice(&self.lap[..n0 * nodes], nodes, n0);
        // far weights: j < n0 < n, so c_j = dt except c_0 = dt/2
        let c = |j: usize| if j == 0 { 0.5 * self.dt } else { self.dt };
        let wg = DMatrix::from_fn(n0, BLOCK, |j, b| c(j) * self.g_lag[n0 + b - j]);
        self.far_q.gemm(1.0, &h, &wg, 0.0);
        if self.diag {
            let wd = DMatrix::from_fn(n0, BLOCK, |j, b| c(j) * self.dg_lag[n0 + b - j]);
            self.far_r.gemm(1.0, &h, &wd, 0.0);
            let uv = DMatrixView::from_slice(&self.uh[..n0 * nodes], nodes, n0);
            self.far_p.gemm(1.0, &uv, &wg, 0.0);
        }
    }

    /// Fills `q` (and `p`, `r` when diagnostics are on) at the latest level.
    pub(crate) fn fields(&mut self, q: &mut [f64], p: &mut [f64], r: &mut [f64]) {
        let n = self.levels() - 1;
        q.iter_mut().for_each(|v| *v = 0.0);
        p.iter_mut().for_each(|v| *v = 0.0);
        r.iter_mut().for_each(|v| *v = 0.0);
        if n == 0 {
            return;
        }
        if self.block_start == 0 || n >= self.block_start + BLOCK {
            self.refresh_far(n);
        }
        let n0 = self.block_start;
        let b = n - n0;
        let nodes = self.nodes;
        q.copy_from_slice(self.far_q.column(b).as_slice());
        if self.diag {
            p.copy_from_slice(self.far_p.column(b).as_slice());
            r.copy_from_slice(self.far_r.column(b).as_slice());
        }
        for j in n0..=n {
            let c = self.weight(j, n);
            let wg = c * self.g_lag[n - j];
            let lap = &self.lap[j * nodes..(j + 1) * nodes];
            q.iter_mut().zip(lap).for_each(|(a, x)| *a += wg * x);
            if self.diag {
                let uj = &self.uh[j * nodes..(j + 1) * nodes];
                p.iter_mut().zip(uj).for_each(|(a, x)| *a += wg * x);
                if j < n {
                    let wd = c * self.dg_lag[n - j];
                    r.iter_mut().zip(lap).for_each(|(a, x)| *a += wd * x);
                }
            }
        }
    }

    pub(crate) fn scalars(&self, with_history: bool) -> MemoryScalars {
        let n = self.levels() - 1;
        if n == 0 {
            return MemoryScalars::default();
        }
        let dt = self.dt;
        // Σ_{j=0}^{n} c_j g(lag n-j): lags 0..=n with end weights dt/2
        let g_int = dt * (self.g_prefix[n + 1] - 0.5 * (self.g_lag[0] + self.g_lag[n]));
        // g' terms skip j = n (lag 0); lag n carries weight dt/2
        let dg_int = dt * (self.dg_prefix[n + 1] - self.dg_lag[0] - 0.5 * self.dg_lag[n]);
        let mut out = MemoryScalars {
            g_int,
            dg_int,
            ..Default::default()
        };
        if with_history {
            for j in 0..=n {
                let c = self.weight(j, n);
                let lag = n - j;
                out.s += c * self.g_lag[lag] * self.gn2[j];
                if j < n {
                    out.s_dg += c * self.dg_lag[lag] * self.gn2[j];
                }
                if self.diag {
                    out.i1 += c * self.i_lag[lag] * self.gn2[j];
                }
            }
        }
        out
    }
}

/// `I(k dt)` for `k < lags`, accumulated backwards panel by panel.
fn tail_table(kernel: &KernelSpec, dt: f64, lags: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; lags];
    let last = (lags - 1) as f64 * dt;
    out[lags - 1] = kernel.tail_integral(last)?;
    for k in (0..lags - 1).rev() {
        let a = k as f64 * dt;
        let piece = crate::quad::integrate(|s| kernel.value(s), a, a + dt, 1e-16, 1e-12)?;
        out[k] = out[k + 1] + piece;
    }
    Ok(out)
}

/// The memory path selected for a run.
#[derive(Debug, Clone)]
pub(crate) enum Memory {
    None,
    Direct(MemoryDirect),
    Fast(MemoryFast),
}

impl Memory {
    pub(crate) fn push_level(&mut self, lap: &[f64], u: &[f64], gn2: f64) {
        match self {
            Memory::None => {}
            Memory::Direct(d) => d.push_level(lap, u, gn2),
            Memory::Fast(f) => f.push_level(lap, u, gn2),
        }
    }

    pub(crate) fn fields(&mut self, q: &mut [f64], p: &mut [f64], r: &mut [f64]) {
        match self {
            Memory::None => {
                q.iter_mut().for_each(|v| *v = 0.0);
                p.iter_mut().for_each(|v| *v = 0.0);
                r.iter_mut().for_each(|v| *v = 0.0);
            }
            Memory::Direct(d) => d.fields(q, p, r),
            Memory::Fast(f) => {
                f.combine(&f.psi, |w, _| w, q);
                if f.track_u {
                    f.combine(&f.phi, |w, _| w, p);
                    f.combine(&f.psi, |w, th| -w * th, r);
                }
            }
        }
    }

    pub(crate) fn scalars(&self, with_history: bool) -> MemoryScalars {
        match self {
            Memory::None => MemoryScalars::default(),
            Memory::Direct(d) => d.scalars(with_history),
            Memory::Fast(f) => f.scalars(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_reference_examples() {
        let k = KernelSpec::exponential(0.5, 1.0).unwrap();
        let lap = vec![1.0, -2.0, 3.0];
        assert_eq!(
            memory_direct(&k, 0.1, std::slice::from_ref(&lap)).unwrap(),
            vec![0.0; 3]
        );
        assert!(memory_direct(&k, 0.1, &[]).is_err());
        // constant history: Q = (quadrature of ∫g) Δu
        let dt = 1e-3;
        let hist = vec![lap.clone(); 2001];
        let q = memory_direct(&k, dt, &hist).unwrap();
        let factor = 1.0 - 0.5 - k.tail_integral(2.0).unwrap();
        for (a, b) in q.iter().zip(&lap) {
            assert!((a - factor * b).abs() < 1e-6 * b.abs());
        }
        let z = KernelSpec::tabulated(vec![0.0, 1.0], vec![0.0, 0.0], None).unwrap();
        assert!(memory_direct(&z, dt, &hist)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn fast_matches_direct_for_exponential() {
        let k = KernelSpec::exponential(0.5, 1.0).unwrap();
        let approx = super::super::prony::prony_fit(&k, 1, 10.0, 1e-6).unwrap();
        let dt = 1e-3;
        let nodes = 4;
        let mut fast = MemoryFast::new(&approx, dt, nodes);
        assert!(fast.q().is_err());
        let mut direct = MemoryDirect::new(&k, dt, nodes, 10_000, false).unwrap();
        let mut hist = Vec::new();
        let (mut q, mut p, mut r) = (vec![0.0; nodes], vec![], vec![]);
        let mut worst: f64 = 0.0;
        for n in 0..=10_000 {
            let t = n as f64 * dt;
            let lap: Vec<f64> = (0..nodes)
                .map(|i| (t * (i + 1) as f64).sin() + 0.1 * i as f64)
                .collect();
            fast.push(&lap);
            direct.push_level(&lap, &[], 0.0);
            direct.fields(&mut q, &mut p, &mut r);
            let qf = fast.q().unwrap();
            for i in 0..nodes {
                worst = worst.max((qf[i] - q[i]).abs() / q[i].abs().max(1e-3));
            }
            if n % 2500 == 0 {
                hist.push(lap.clone());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }
}
