//! Explicit central-difference integrator with centered damping and a
//! lagged memory term.

mod memory;
mod prony;

pub use memory::{memory_direct, MemoryFast};
pub use prony::{prony_fit, PronyApprox};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{p_bounds, DimensionPolicy, ExponentField};
use crate::expr::Expr;
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use memory::{Memory, MemoryDirect};

/// How the memory convolution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryMode {
    Direct,
    Prony { modes: usize, tol: f64 },
}

/// Initial data given either as an expression in `x, y` or as node values.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Expr(Expr),
    Values(Vec<f64>),
}

impl FieldSource {
    pub fn zero() -> Self {
        FieldSource::Values(vec![])
    }

    fn sample(&self, grid: &Grid, field: &str) -> Result<Vec<f64>> {
        let mut v = match self {
            FieldSource::Expr(e) => grid.sample(e, 0.0),
            FieldSource::Values(v) if v.is_empty() => grid.zeros(),
            FieldSource::Values(v) => {
                grid.check_len(v).map_err(|_| {
                    Error::validation(
                        field,
                        format!("expected {} node values, got {}", grid.len(), v.len()),
                    )
                })?;
                v.clone()
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(field, "non-finite initial value"));
        }
        grid.pin_boundary(&mut v);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid,
    pub kernel: KernelSpec,
    pub exponent: ExponentField,
    pub alpha: f64,
    pub dt: f64,
    pub horizon: f64,
    pub memory_mode: MemoryMode,
    pub u0: FieldSource,
    pub u1: FieldSource,
    /// Testing-only source term; `None` means `f = 0`.
    pub forcing: Option<Expr>,
    pub record_every: usize,
    /// Also track the companion memory fields needed by the proof functionals.
    pub diagnostics: bool,
    /// Keep a copy of `u` every this many records.
    pub snapshot_every: Option<usize>,
    pub dimension_policy: DimensionPolicy,
    pub max_history_bytes: usize,
}

impl SimConfig {
    /// Config with zero data, one record per step and the default memory
    /// path for the grid dimension (direct in 1D, eight modes in 2D).
    pub fn new(
        grid: Grid,
        kernel: KernelSpec,
        exponent: ExponentField,
        alpha: f64,
        dt: f64,
        horizon: f64,
    ) -> Self {
        let memory_mode = if grid.dim() == 1 {
            MemoryMode::Direct
        } else {
            MemoryMode::Prony {
                modes: 8,
                tol: 1e-6,
            }
        };
        SimConfig {
            grid,
            kernel,
            exponent,
            alpha,
            dt,
            horizon,
            memory_mode,
            u0: FieldSource::zero(),
            u1: FieldSource::zero(),
            forcing: None,
            record_every: 1,
            diagnostics: true,
            snapshot_every: None,
            dimension_policy: DimensionPolicy::Relaxed,
            max_history_bytes: 4 << 30,
        }
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    /// Largest admissible step: `0.9 h / sqrt(n (1 + ∫_0^T g))`.
    pub fn cfl_limit(&self) -> Result<f64> {
        let gint = if self.kernel.is_zero() {
            0.0
        } else {
            self.kernel.integral_to(self.horizon)?
        };
        Ok(0.9 * self.grid.h_min() / (self.grid.dim() as f64 * (1.0 + gint)).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(
                "time.dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation(
                "time.horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::validation(
                "output.record_every",
                "must be at least 1",
            ));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::validation(
                "output.snapshot_every",
                "must be at least 1",
            ));
        }
        if !self.kernel.is_zero() {
            let a1 = self.kernel.check_a1()?;
            if !a1.ok {
                return Err(Error::validation(
                    "kernel",
                    format!("violates A1: g(0) = {}, ℓ = {}, monotone = {}; need g(0) > 0, ℓ > 0, g' <= 0", a1.g0, a1.ell, a1.monotone),
                ));
            }
        }
        let pb = p_bounds(&self.exponent, self.grid.dim(), self.dimension_policy)?;
        if !pb.valid {
            return Err(Error::validation(
                "exponent",
                format!(
                    "p1 = {}, p2 = {} outside the admissible range (upper {:?})",
                    pb.p1, pb.p2, pb.upper
                ),
            ));
        }
        self.grid.check_len(self.exponent.values())?;
        let limit = self.cfl_limit()?;
        if self.dt > limit {
            return Err(Error::validation(
                "time.dt",
                format!("{} exceeds the CFL limit {limit:.6e}", self.dt),
            ));
        }
        if let MemoryMode::Prony { modes, tol } = self.memory_mode {
            if modes == 0 {
                return Err(Error::validation("memory.modes", "need at least one mode"));
            }
            if !(tol > 0.0) {
                return Err(Error::validation(
                    "memory.tol",
                    format!("must be positive, got {tol}"),
                ));
            }
        }
        if self.memory_mode == MemoryMode::Direct && !self.kernel.is_zero() {
            let fields = if self.diagnostics { 2 } else { 1 };
            let bytes = (self.steps() + 2) * self.grid.len() * 8 * fields;
            if bytes > self.max_history_bytes {
                return Err(Error::validation(
                    "memory.mode",
                    format!(
                        "direct history needs {bytes} bytes, limit {}; use prony mode",
                        self.max_history_bytes
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// `α |u|^{p-2} u log|u|`, extended by 0 at `u = 0`.
pub fn nonlinearity(u: f64, p: f64, alpha: f64) -> f64 {
    let a = u.abs();
    if a < 1e-300 {
        return 0.0;
    }
    alpha * a.powf(p - 2.0) * u * a.ln()
}

/// Scalars recorded at one time level `tₙ`. Time derivatives are formed
/// from the three levels `n-1, n, n+1`; `w = (u^{n+1} - u^{n-1}) / (2 dt)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RawRecord {
    pub t: f64,
    /// Discrete kinetic energy: `kin_half + ¼ a(uⁿ, u^{n+1} - 2uⁿ + u^{n-1})`.
    pub kin: f64,
    /// `¼ (‖(u^{n+1} - uⁿ)/dt‖² + ‖(uⁿ - u^{n-1})/dt‖²)`.
    pub kin_half: f64,
    /// `‖w‖²`
    pub ut_sq: f64,
    pub grad_sq: f64,
    pub l2_sq: f64,
    /// Quadrature of `∫_0^t g` used by the scheme.
    pub g_int: f64,
    /// Kernel value at `t` used by the scheme.
    pub g_t: f64,
    /// `(g∘∇u)(t)`
    pub mem: f64,
    /// `(g'∘∇u)(t)`; NaN without diagnostics.
    pub mem_dg: f64,
    /// `∫ |u|^p log|u| / p`
    pub log_term: f64,
    /// `∫ |u|^p / p²`
    pub mod_term: f64,
    /// `∫ |u|^p log|u|`
    pub plog: f64,
    /// `∫ |u|^p`
    pub pw: f64,
    /// `(w, u)`
    pub ut_u: f64,
    /// `½ d/dt ‖u‖²` averaged over the two half steps.
    pub i3: f64,
    /// `(‖u^{n+1}‖² - ‖uⁿ‖²) / (2 dt)`
    pub h_plus: f64,
    /// `(δ²u / dt², u) + 2 kin_half`
    pub di3: f64,
    pub i4: f64,
    /// `-(Q, u) - ∫_0^t g ‖∇u‖²`
    pub j5: f64,
    /// `‖∇(∫_0^t g(t-s)(u(t) - u(s)) ds)‖²`
    pub mem_dev_sq: f64,
    pub i1: f64,
    pub forcing_u: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SimConfig,
    pub records: Vec<RawRecord>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_u: Vec<f64>,
    /// Centered velocity at the final level.
    pub final_v: Vec<f64>,
    pub steps: usize,
    pub prony: Option<PronyApprox>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn forcing_active(&self) -> bool {
        self.config
            .forcing
            .as_ref()
            .is_some_and(|f| !f.is_zero_literal())
    }
}

struct Work {
    lap: Vec<f64>,
    q: Vec<f64>,
    p: Vec<f64>,
    r: Vec<f64>,
    nl: Vec<f64>,
    f: Vec<f64>,
}

pub fn run(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let grid = &config.grid;
    let n = grid.len();
    let dt = config.dt;
    let steps = config.steps();
    let diag = config.diagnostics;
    let pvals = config.exponent.values();
    let alpha = config.alpha;

    let (mut memory, prony) = if config.kernel.is_zero() {
        (Memory::None, None)
    } else {
        match config.memory_mode {
            MemoryMode::Direct => (
                Memory::Direct(MemoryDirect::new(&config.kernel, dt, n, steps, diag)?),
                None,
            ),
            MemoryMode::Prony { modes, tol } => {
                let approx = prony_fit(&config.kernel, modes, config.horizon + 2.0 * dt, tol)?;
                let fast = MemoryFast::with_u_history(&approx, dt, n, diag);
                (Memory::Fast(fast), Some(approx))
            }
        }
    };
    let kernel_at = |t: f64| match (&prony, config.kernel.is_zero()) {
        (_, true) => 0.0,
        (Some(a), _) => a.value(t),
        (None, _) => config.kernel.value(t),
    };
    let forcing = config.forcing.as_ref().filter(|f| !f.is_zero_literal());
    let static_forcing = forcing
        .filter(|f| f.is_time_independent())
        .map(|f| grid.sample(f, 0.0));

    let mut w = Work {
        lap: vec![0.0; n],
        q: vec![0.0; n],
        p: vec![0.0; n],
        r: vec![0.0; n],
        nl: vec![0.0; n],
        f: vec![0.0; n],
    };
    let fill_forcing = |t: f64, out: &mut Vec<f64>| match (&static_forcing, forcing) {
        (Some(s), _) => out.copy_from_slice(s),
        (None, Some(e)) => *out = grid.sample(e, t),
        _ => {}
    };

    let u0 = config.u0.sample(grid, "init.u0")?;
    let u1 = config.u1.sample(grid, "init.u1")?;

    // first step from the Taylor expansion, with u^{-1} = u^1 - 2 dt u1
    grid.laplacian(&u0, &mut w.lap);
    fill_forcing(0.0, &mut w.f);
    let mut u = u0;
    let mut unext: Vec<f64> = (0..n)
        .map(|k| {
            let acc = w.lap[k] + nonlinearity(u[k], pvals[k], alpha) + w.f[k] - u1[k];
            u[k] + dt * u1[k] + 0.5 * dt * dt * acc
        })
        .collect();
    grid.pin_boundary(&mut unext);
    let mut uprev: Vec<f64> = unext
        .iter()
        .zip(&u1)
        .map(|(a, v)| a - 2.0 * dt * v)
        .collect();

    let inv_dt2 = 1.0 / (dt * dt);
    let half_inv_dt = 0.5 / dt;
    let denom = inv_dt2 + half_inv_dt;
    let prev_coef = inv_dt2 - half_inv_dt;

    let mut records = Vec::with_capacity(steps / config.record_every + 2);
    let mut snapshots = Vec::new();
    let mut n_records = 0usize;

    for step in 0..=steps {
        let t = step as f64 * dt;
        grid.laplacian(&u, &mut w.lap);
        let gn2 = grid.grad_norm_sq(&u);
        memory.push_level(&w.lap, &u, gn2);
        memory.fields(&mut w.q, &mut w.p, &mut w.r);
        fill_forcing(t, &mut w.f);
        for k in 0..n {
            w.nl[k] = nonlinearity(u[k], pvals[k], alpha);
        }
        if step > 0 {
            let mut bad = false;
            for k in 0..n {
                let rhs = 2.0 * u[k] * inv_dt2 - uprev[k] * prev_coef + w.lap[k] - w.q[k]
                    + w.nl[k]
                    + w.f[k];
                unext[k] = rhs / denom;
                bad |= !unext[k].is_finite();
            }
            grid.pin_boundary(&mut unext);
            if bad {
                return Err(Error::Instability {
                    step,
                    t,
                    reason: "non-finite value in u".into(),
                });
            }
        }
        let is_record = step % config.record_every == 0 || step == steps;
        if is_record {
            let scalars = memory.scalars(true);
            records.push(record(
                config,
                &uprev,
                &u,
                &unext,
                &w,
                gn2,
                scalars,
                t,
                kernel_at(t),
            ));
            if let Some(every) = config.snapshot_every {
                if n_records.is_multiple_of(every) {
                    snapshots.push((t, u.clone()));
                }
            }
            n_records += 1;
        }
        if step < steps {
            // rotate levels: uprev <- u <- unext
            std::mem::swap(&mut uprev, &mut u);
            std::mem::swap(&mut u, &mut unext);
        }
    }
    let final_v: Vec<f64> = unext
        .iter()
        .zip(&uprev)
        .map(|(a, b)| (a - b) / (2.0 * dt))
        .collect();
    Ok(Trajectory {
        config: config.clone(),
        records,
        snapshots,
        final_u: u,
        final_v,
        steps,
        prony,
    })
}

#[allow(clippy::too_many_arguments)]
fn record(
    config: &SimConfig,
    uprev: &[f64],
    u: &[f64],
    unext: &[f64],
    w: &Work,
    grad_sq: f64,
    s: memory::MemoryScalars,
    t: f64,
    g_t: f64,
) -> RawRecord {
    let grid = &config.grid;
    let dt = config.dt;
    let n = u.len();
    let pvals = config.exponent.values();
    let wts = grid.weights();

    let mut vp_sq = 0.0;
    let mut vm_sq = 0.0;
    let mut ut_sq = 0.0;
    let mut ut_u = 0.0;
    let mut dd_u = 0.0;
    let mut l2_sq = 0.0;
    let mut next_sq = 0.0;
    let mut prev_sq = 0.0;
    let mut q_u = 0.0;
    let mut f_u = 0.0;
    let mut plog = 0.0;
    let mut pw = 0.0;
    let mut log_term = 0.0;
    let mut mod_term = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut i4 = 0.0;
    let mut dd = vec![0.0; n];
    let mut dev = vec![0.0; n];
    for k in 0..n {
        let wk = wts[k];
        let vp = (unext[k] - u[k]) / dt;
        let vm = (u[k] - uprev[k]) / dt;
        let vc = (unext[k] - uprev[k]) / (2.0 * dt);
        dd[k] = unext[k] - 2.0 * u[k] + uprev[k];
        vp_sq += wk * vp * vp;
        vm_sq += wk * vm * vm;
        ut_sq += wk * vc * vc;
        ut_u += wk * vc * u[k];
        dd_u += wk * dd[k] * u[k];
        l2_sq += wk * u[k] * u[k];
        next_sq += wk * unext[k] * unext[k];
        prev_sq += wk * uprev[k] * uprev[k];
        q_u += wk * w.q[k] * u[k];
        f_u += wk * w.f[k] * u[k];
        max_abs = max_abs.max(u[k].abs());
        let a = u[k].abs();
        if a >= 1e-300 {
            let p = pvals[k];
            let ap = a.powf(p);
            let lg = a.ln();
            plog += wk * ap * lg;
            pw += wk * ap;
            log_term += wk * ap * lg / p;
            mod_term += wk * ap / (p * p);
        }
        if config.diagnostics {
            dev[k] = s.g_int * u[k] - w.p[k];
            i4 -= wk * vc * dev[k];
        }
    }
    let kin_half = 0.25 * (vp_sq + vm_sq);
    let kin = kin_half + 0.25 * grid.grad_dot(u, &dd);
    let h_plus = (next_sq - l2_sq) / (2.0 * dt);
    let h_minus = (l2_sq - prev_sq) / (2.0 * dt);
    let (mem_dg, mem_dev_sq, i4, i1) = if config.diagnostics {
        let r_u = grid.dot(&w.r, u);
        (
            s.dg_int * grad_sq + 2.0 * r_u + s.s_dg,
            grid.grad_norm_sq(&dev),
            i4,
            s.i1,
        )
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    RawRecord {
        t,
        kin,
        kin_half,
        ut_sq,
        grad_sq,
        l2_sq,
        g_int: s.g_int,
        g_t,
        mem: s.g_int * grad_sq + 2.0 * q_u + s.s,
        mem_dg,
        log_term,
        mod_term,
        plog,
        pw,
        ut_u,
        i3: 0.5 * (h_plus + h_minus),
        h_plus,
        di3: dd_u / (dt * dt) + 2.0 * kin_half,
        i4,
        j5: -q_u - s.g_int * grad_sq,
        mem_dev_sq,
        i1,
        forcing_u: f_u,
        max_abs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n: usize, kernel: KernelSpec, alpha: f64, dt: f64, t: f64) -> SimConfig {
        let grid = Grid::new_1d(1.0, n).unwrap();
        let p = ExponentField::constant(&grid, 3.0).unwrap();
        SimConfig::new(grid, kernel, p, alpha, dt, t)
    }

    #[test]
    fn nonlinearity_examples() {
        assert_eq!(nonlinearity(0.0, 3.0, 1.0), 0.0);
        assert_eq!(nonlinearity(1.0, 2.5, 7.0), 0.0);
        let e = std::f64::consts::E;
        assert!((nonlinearity(e, 3.0, 1.0) - e * e).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = base(
            32,
            KernelSpec::exponential(0.5, 1.0).unwrap(),
            0.01,
            0.01,
            1.0,
        );
        let tr = run(&cfg).unwrap();
        assert!(tr.final_u.iter().all(|v| *v == 0.0));
        assert!(tr
            .records
            .iter()
            .all(|r| r.kin == 0.0 && r.mem == 0.0 && r.grad_sq == 0.0));
    }

    #[test]
    fn cfl_gate_rejects_large_step() {
        let cfg = base(
            32,
            KernelSpec::exponential(0.5, 1.0).unwrap(),
            0.01,
            0.05,
            1.0,
        );
        assert!(matches!(cfg.validate(), Err(Error::Validation { .. })));
    }

    #[test]
    fn boundary_stays_pinned() {
        let mut cfg = base(
            32,
            KernelSpec::exponential(0.5, 1.0).unwrap(),
            0.01,
            0.01,
            1.0,
        );
        cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)").unwrap());
        cfg.snapshot_every = Some(1);
        let tr = run(&cfg).unwrap();
        for (_, s) in &tr.snapshots {
            assert!(s[0] == 0.0 && s[32] == 0.0);
        }
    }

    #[test]
    fn direct_and_prony_agree_for_exponential() {
        let mut cfg = base(
            64,
            KernelSpec::exponential(0.5, 1.0).unwrap(),
            0.01,
            0.005,
            2.0,
        );
        cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)+0.3*sin(2*pi*x)").unwrap());
        cfg.u1 = FieldSource::Expr(Expr::parse("0.5*sin(pi*x)").unwrap());
        let a = run(&cfg).unwrap();
        cfg.memory_mode = MemoryMode::Prony {
            modes: 8,
            tol: 1e-6,
        };
        let b = run(&cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.mem - rb.mem).abs() <= 1e-10 * (1.0 + ra.mem.abs()));
            assert!((ra.mem_dg - rb.mem_dg).abs() <= 1e-9 * (1.0 + ra.mem_dg.abs()));
            assert!(
                (ra.i1 - rb.i1).abs() <= 1e-9 * (1.0 + ra.i1.abs()),
                "{} {}",
                ra.i1,
                rb.i1
            );
            assert!((ra.i4 - rb.i4).abs() <= 1e-9 * (1.0 + ra.i4.abs()));
        }
    }
}
