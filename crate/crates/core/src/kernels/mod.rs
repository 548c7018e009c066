//! Relaxation kernels `g`, the basic hypothesis check on them and the
//! scalar quantities derived from `g`: residual elasticity `ℓ`, tail
//! integral `I(t)`, `K_δ(s) = -g'(s)/g(s) + δ` and `M(δ) = ∫ g / K_δ`.

mod gfun;
mod xi;

pub use gfun::{check_a2, A2Report, ExtendedG, GFamily, GSpec, Rate};
pub use xi::{check_a3, A3Report, XiSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

const QUAD_ABS: f64 = 1e-13;
const QUAD_REL: f64 = 1e-12;

/// Decay envelope used to close the tail of a tabulated kernel beyond its
/// last sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `g(t) = g_last · exp(-rate (t - t_last))`
    Exponential { rate: f64 },
    /// `g(t) = g_last · ((1 + t) / (1 + t_last))^(-exponent)`, exponent > 1
    Power { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub t: Vec<f64>,
    pub g: Vec<f64>,
    pub envelope: Option<Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `g ≡ 0`: no memory.
    Zero,
    /// `a · exp(-b t)`
    Exponential {
        a: f64,
        b: f64,
    },
    /// `a · (1 + t)^(-r)`
    Polynomial {
        a: f64,
        r: f64,
    },
    /// `a · exp(-t^p)`, `0 < p < 1`
    Stretched {
        a: f64,
        p: f64,
    },
    Tabulated(Tabulated),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Time beyond which tail integrals come from the closed form or envelope.
    pub horizon: f64,
}

/// Outcome of the basic kernel hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A1Report {
    pub g0: f64,
    pub ell: f64,
    pub monotone: bool,
    pub ok: bool,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Result<Self> {
        let mut spec = KernelSpec {
            family,
            horizon: 0.0,
        };
        spec.validate_params()?;
        spec.horizon = spec.default_horizon();
        Ok(spec)
    }

    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential { a, b })
    }

    pub fn polynomial(a: f64, r: f64) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { a, r })
    }

    pub fn stretched(a: f64, p: f64) -> Result<Self> {
        Self::new(KernelFamily::Stretched { a, p })
    }

    pub fn zero() -> Self {
        KernelSpec {
            family: KernelFamily::Zero,
            horizon: 1.0,
        }
    }

    pub fn tabulated(t: Vec<f64>, g: Vec<f64>, envelope: Option<Envelope>) -> Result<Self> {
        Self::new(KernelFamily::Tabulated(Tabulated { t, g, envelope }))
    }

    pub fn is_zero(&self) -> bool {
        match &self.family {
            KernelFamily::Zero => true,
            KernelFamily::Tabulated(tab) => tab.g.iter().all(|&v| v == 0.0),
            _ => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Zero => "zero",
            KernelFamily::Exponential { .. } => "exponential",
            KernelFamily::Polynomial { .. } => "polynomial",
            KernelFamily::Stretched { .. } => "stretched",
            KernelFamily::Tabulated(_) => "tabulated",
        }
    }

    fn validate_params(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(
                    format!("kernel.{name}"),
                    format!("must be a positive real, got {v}"),
                ))
            }
        };
        match &self.family {
            KernelFamily::Zero => Ok(()),
            KernelFamily::Exponential { a, b } => positive("a", *a).and(positive("b", *b)),
            KernelFamily::Polynomial { a, r } => {
                positive("a", *a)?;
                if *r <= 1.0 {
                    return Err(Error::validation(
                        "kernel.r",
                        "polynomial kernel needs r > 1 for a finite integral",
                    ));
                }
                Ok(())
            }
            KernelFamily::Stretched { a, p } => {
                positive("a", *a)?;
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::validation(
                        "kernel.p",
                        "stretched kernel needs 0 < p < 1",
                    ));
                }
                Ok(())
            }
            KernelFamily::Tabulated(tab) => {
                if tab.t.len() < 2 || tab.t.len() != tab.g.len() {
                    return Err(Error::validation(
                        "kernel.samples",
                        "need at least two (t, g) samples",
                    ));
                }
                if tab.t[0] != 0.0 {
                    return Err(Error::validation(
                        "kernel.samples",
                        "first sample must be at t = 0",
                    ));
                }
                if tab.t.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::validation(
                        "kernel.samples",
                        "sample times must increase strictly",
                    ));
                }
                Ok(())
            }
        }
    }

    fn default_horizon(&self) -> f64 {
        const TAIL: f64 = 1e-9;
        match &self.family {
            KernelFamily::Zero => 1.0,
            KernelFamily::Exponential { a, b } => ((a / (b * TAIL)).ln() / b).max(1.0),
            KernelFamily::Polynomial { a, r } => {
                ((a / ((r - 1.0) * TAIL)).powf(1.0 / (r - 1.0)) - 1.0).max(1.0)
            }
            KernelFamily::Stretched { .. } => {
                // I(t) is decreasing; find where it crosses TAIL.
                let mut hi = 1.0;
                while self.tail_closed_form(hi) > TAIL && hi < 1e12 {
                    hi *= 2.0;
                }
                quad::bisect(|t| self.tail_closed_form(t) - TAIL, 0.0, hi, 1e-6).unwrap_or(hi)
            }
            KernelFamily::Tabulated(tab) => *tab.t.last().unwrap(),
        }
    }

    /// `g(t)` without argument checking; `t` must be non-negative.
    pub fn value(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { a, b } => a * (-b * t).exp(),
            KernelFamily::Polynomial { a, r } => a * (1.0 + t).powf(-r),
            KernelFamily::Stretched { a, p } => a * (-t.powf(*p)).exp(),
            KernelFamily::Tabulated(tab) => tab.value(t),
        }
    }

    pub fn eval_g(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel evaluated at negative time {t}"
            )));
        }
        Ok(self.value(t))
    }

    /// `g'(t)`: closed form for presets, central differences on the sample
    /// spacing for tabulated kernels. The stretched kernel has `g'(0) = -∞`.
    pub fn derivative(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { a, b } => -a * b * (-b * t).exp(),
            KernelFamily::Polynomial { a, r } => -a * r * (1.0 + t).powf(-r - 1.0),
            KernelFamily::Stretched { a, p } => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -a * p * t.powf(p - 1.0) * (-t.powf(*p)).exp()
                }
            }
            KernelFamily::Tabulated(tab) => tab.derivative(t),
        }
    }

    /// `g(0)`.
    pub fn g0(&self) -> f64 {
        self.value(0.0)
    }

    /// Closed-form or envelope tail `∫_t^∞ g`.
    fn tail_closed_form(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Exponential { a, b } => a / b * (-b * t).exp(),
            KernelFamily::Polynomial { a, r } => a * (1.0 + t).powf(1.0 - r) / (r - 1.0),
            KernelFamily::Stretched { a, p } => {
                // (a/p) Γ(1/p, t^p) written as an integral in u = s^p.
                let s = 1.0 / p;
                let lower = t.powf(*p);
                let f = |u: f64| {
                    if u <= 0.0 && s < 1.0 {
                        0.0
                    } else {
                        u.powf(s - 1.0) * (-u).exp()
                    }
                };
                let v = quad::integrate(f, lower, lower + 50.0, 1e-300, 1e-14).unwrap_or(f64::NAN)
                    + quad::integrate_to_infinity(f, lower + 50.0, 1e-300, 1e-12).unwrap_or(0.0);
                a / p * v
            }
            KernelFamily::Tabulated(tab) => tab.tail(t).unwrap_or(f64::NAN),
        }
    }

    /// `I(t) = ∫_t^∞ g(s) ds`.
    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail integral at negative time {t}"
            )));
        }
        if let KernelFamily::Tabulated(tab) = &self.family {
            return tab.tail(t);
        }
        Ok(self.tail_closed_form(t))
    }

    /// `∫_0^t g(s) ds`.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        let total = self.tail_integral(0.0)?;
        Ok(total - self.tail_integral(t)?)
    }

    /// Validates the basic hypothesis: `g(0) > 0`, `g` non-increasing on a
    /// sampled grid and `ℓ = 1 - ∫_0^∞ g > 0`. The integral is computed by
    /// adaptive quadrature on `[0, horizon]` plus the closed-form tail.
    pub fn check_a1(&self) -> Result<A1Report> {
        let g0 = self.g0();
        let head = self.quadrature_to(self.horizon)?;
        let tail = self.tail_integral(self.horizon)?;
        let ell = 1.0 - (head + tail);
        let monotone = self.is_monotone();
        Ok(A1Report {
            g0,
            ell,
            monotone,
            ok: g0 > 0.0 && monotone && ell > 0.0,
        })
    }

    /// Adaptive quadrature of `g` over `[0, upper]` on geometrically growing
    /// panels.
    pub fn quadrature_to(&self, upper: f64) -> Result<f64> {
        if let KernelFamily::Tabulated(tab) = &self.family {
            return Ok(tab.integral_to(upper));
        }
        let mut acc = 0.0;
        let mut lo = 0.0;
        let mut hi = upper.min(1.0);
        while lo < upper {
            acc += quad::integrate(|s| self.value(s), lo, hi, QUAD_ABS * 1e-3, QUAD_REL)?;
            lo = hi;
            hi = (2.0 * hi).min(upper);
        }
        Ok(acc)
    }

    fn is_monotone(&self) -> bool {
        let n = 4000;
        let upper = self.horizon.max(1.0);
        let mut prev = self.value(0.0);
        for i in 1..=n {
            // quadratic spacing resolves the early decay
            let s = upper * (i as f64 / n as f64).powi(2);
            let v = self.value(s);
            if v > prev + 1e-12 {
                return false;
            }
            prev = v;
        }
        if let KernelFamily::Tabulated(tab) = &self.family {
            return tab.g.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        }
        true
    }

    /// `K_δ(s) = -g'(s)/g(s) + δ`.
    pub fn k_delta(&self, delta: f64, s: f64) -> Result<f64> {
        let g = self.value(s);
        if !(g > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "K_delta needs g(s) > 0, got g({s}) = {g}"
            )));
        }
        Ok(-self.derivative(s) / g + delta)
    }

    /// `M(δ) = ∫_0^∞ g(s)/K_δ(s) ds`.
    pub fn m_delta(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "M(delta) needs delta > 0, got {delta}"
            )));
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        if let KernelFamily::Exponential { a, b } = self.family {
            return Ok(a / (b * (b + delta)));
        }
        let f = |s: f64| {
            let g = self.value(s);
            if g <= 0.0 {
                return 0.0;
            }
            let k = -self.derivative(s) / g + delta;
            if k.is_infinite() {
                0.0
            } else {
                g / k
            }
        };
        let mut acc = 0.0;
        let mut lo = 0.0;
        let mut hi: f64 = 1.0;
        let upper = self.horizon.max(1.0);
        while lo < upper {
            acc += quad::integrate(f, lo, hi.min(upper), 1e-14, 1e-12)?;
            lo = hi.min(upper);
            hi *= 2.0;
        }
        acc += quad::integrate_to_infinity(f, upper, 1e-14, 1e-10)?;
        Ok(acc)
    }
}

impl Tabulated {
    fn segment(&self, t: f64) -> usize {
        match self.t.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.t.len() - 2),
        }
    }

    fn last(&self) -> (f64, f64) {
        (*self.t.last().unwrap(), *self.g.last().unwrap())
    }

    fn envelope_value(&self, t: f64) -> f64 {
        let (tl, gl) = self.last();
        match self.envelope {
            Some(Envelope::Exponential { rate }) => gl * (-rate * (t - tl)).exp(),
            Some(Envelope::Power { exponent }) => gl * ((1.0 + t) / (1.0 + tl)).powf(-exponent),
            None => gl,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let (tl, _) = self.last();
        if t >= tl {
            return self.envelope_value(t);
        }
        let i = self.segment(t);
        let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.g[i] + w * (self.g[i + 1] - self.g[i])
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = 0.5 * (self.t[i + 1] - self.t[i]);
        if t < h {
            return (self.value(t + h) - self.value(t)) / h;
        }
        (self.value(t + h) - self.value(t - h)) / (2.0 * h)
    }

    fn integral_to(&self, upper: f64) -> f64 {
        let (tl, _) = self.last();
        let mut acc = 0.0;
        for i in 0..self.t.len() - 1 {
            let (a, b) = (self.t[i], self.t[i + 1]);
            if a >= upper {
                break;
            }
            let e = b.min(upper);
            acc += 0.5 * (e - a) * (self.g[i] + self.value(e));
        }
        if upper > tl {
            acc += self.envelope_tail(tl).unwrap_or(0.0) - self.envelope_tail(upper).unwrap_or(0.0);
        }
        acc
    }

    fn envelope_tail(&self, t: f64) -> Result<f64> {
        let (tl, gl) = self.last();
        let t = t.max(tl);
        match self.envelope {
            Some(Envelope::Exponential { rate }) => Ok(gl / rate * (-rate * (t - tl)).exp()),
            Some(Envelope::Power { exponent }) if exponent > 1.0 => Ok(gl
                * (1.0 + tl).powf(exponent)
                * (1.0 + t).powf(1.0 - exponent)
                / (exponent - 1.0)),
            _ if gl == 0.0 => Ok(0.0),
            _ => Err(Error::Quadrature(
                "tail bound unavailable for tabulated kernel without a decay envelope".into(),
            )),
        }
    }

    fn tail(&self, t: f64) -> Result<f64> {
        let (tl, _) = self.last();
        let beyond = self.envelope_tail(t)?;
        if t >= tl {
            return Ok(beyond);
        }
        Ok(self.integral_to(tl) - self.integral_to(t) + beyond)
    }
}
