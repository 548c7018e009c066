use serde::{Deserialize, Serialize};

use super::gfun::Rate;
use super::KernelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiSpec {
    pub xi: Rate,
    pub q: f64,
}

impl XiSpec {
    pub fn new(xi: Rate, q: f64) -> Result<Self> {
        xi.validate("xi")?;
        if !(1.0..2.0).contains(&q) {
            return Err(Error::validation(
                "xi.q",
                format!("needs 1 <= q < 2, got {q}"),
            ));
        }
        Ok(XiSpec { xi, q })
    }

    /// `∫_0^t ξ`.
    pub fn integral(&self, t: f64) -> f64 {
        self.xi.integral(0.0, t)
    }

    /// Proxy for `∫_0^∞ ξ = ∞` over a finite horizon: the second half of
    /// `[0, T]` must still contribute at least a tenth of the first half.
    pub fn diverges_on(&self, horizon: f64) -> bool {
        let first = self.xi.integral(0.0, 0.5 * horizon);
        let second = self.xi.integral(0.5 * horizon, horizon);
        second >= 0.1 * first
    }
}

/// Per-sample report of `g'(t) <= -ξ(t) g(t)^q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A3Report {
    pub t: Vec<f64>,
    pub residual: Vec<f64>,
    pub violations: Vec<usize>,
    pub max_residual: f64,
    pub ok: bool,
}

pub fn check_a3(spec: &KernelSpec, xi_spec: &XiSpec, grid: &[f64]) -> A3Report {
    let tol = 1e-10 * spec.g0();
    let mut residual = Vec::with_capacity(grid.len());
    let mut violations = Vec::new();
    let mut max_residual = f64::NEG_INFINITY;
    for (i, &t) in grid.iter().enumerate() {
        if t <= 0.0 {
            residual.push(f64::NAN);
            continue;
        }
        let res = spec.derivative(t) + xi_spec.xi.value(t) * spec.value(t).powf(xi_spec.q);
        max_residual = max_residual.max(res);
        if res > tol {
            violations.push(i);
        }
        residual.push(res);
    }
    A3Report {
        t: grid.to_vec(),
        ok: violations.is_empty(),
        residual,
        violations,
        max_residual,
    }
}
