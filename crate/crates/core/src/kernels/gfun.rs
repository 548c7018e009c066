use serde::{Deserialize, Serialize};

use super::KernelSpec;
use crate::error::{Error, Result};
use crate::quad;

/// Positive non-increasing scalar rate: a constant or `c (1 + t)^(-k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rate {
    Constant { c: f64 },
    Power { c: f64, k: f64 },
}

impl Rate {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Rate::Constant { c } => c,
            Rate::Power { c, k } => c * (1.0 + t).powf(-k),
        }
    }

    /// `∫_a^b` of the rate.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            Rate::Constant { c } => c * (b - a),
            Rate::Power { c, k } if (k - 1.0).abs() < 1e-14 => c * ((1.0 + b) / (1.0 + a)).ln(),
            Rate::Power { c, k } => {
                c * ((1.0 + b).powf(1.0 - k) - (1.0 + a).powf(1.0 - k)) / (1.0 - k)
            }
        }
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        let (c, k) = match *self {
            Rate::Constant { c } => (c, 0.0),
            Rate::Power { c, k } => (c, k),
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::validation(
                field,
                format!("must be positive, got {c}"),
            ));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::validation(
                field,
                format!("decay exponent must be non-negative, got {k}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GFamily {
    /// `G(t) = k t`
    Linear { k: f64 },
    /// `G(t) = c t^m`, `m > 1`
    Power { c: f64, m: f64 },
    /// `G(t) = p t (ln(a/t))^(1 - 1/p)`, matched to the kernel `a exp(-t^p)`
    Stretched { a: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GSpec {
    pub family: GFamily,
    pub r: f64,
    pub zeta: Rate,
}

/// Cutoff below which `G1` is not evaluated, relative to `r`.
const T_MIN_REL: f64 = 1e-12;

impl GSpec {
    pub fn new(family: GFamily, r: f64, zeta: Rate) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::validation(
                "g_fn.r",
                format!("must be positive, got {r}"),
            ));
        }
        zeta.validate("g_fn.zeta")?;
        match family {
            GFamily::Linear { k } if !(k > 0.0) => {
                return Err(Error::validation(
                    "g_fn.k",
                    "linear G needs a positive slope",
                ))
            }
            GFamily::Power { c, m } if !(c > 0.0 && m > 1.0) => {
                return Err(Error::validation("g_fn.m", "power G needs c > 0 and m > 1"))
            }
            GFamily::Stretched { a, p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::validation("g_fn.p", "needs 0 < p < 1"));
                }
                if !(r < a) {
                    return Err(Error::validation("g_fn.r", "stretched G needs r < a"));
                }
            }
            _ => {}
        }
        Ok(GSpec { family, r, zeta })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.family, GFamily::Linear { .. })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.family {
            GFamily::Linear { k } => k * t,
            GFamily::Power { c, m } => c * t.powf(m),
            GFamily::Stretched { a, p } => {
                let l = (a / t).ln();
                p * t * l.powf(1.0 - 1.0 / p)
            }
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match self.family {
            GFamily::Linear { k } => k,
            _ if t <= 0.0 => 0.0,
            GFamily::Power { c, m } => c * m * t.powf(m - 1.0),
            GFamily::Stretched { a, p } => {
                let l = (a / t).ln();
                (1.0 - p + p * l) / l.powf(1.0 / p)
            }
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match self.family {
            GFamily::Linear { .. } => 0.0,
            GFamily::Power { c, m } => c * m * (m - 1.0) * t.powf(m - 2.0),
            GFamily::Stretched { a, p } => {
                let l = (a / t).ln();
                (1.0 - p) * (l + 1.0 / p) / (t * l.powf(1.0 / p + 1.0))
            }
        }
    }

    /// Convex `C¹` extension to `[0, ∞)` by a quadratic beyond `r`.
    pub fn extend(&self) -> Result<ExtendedG> {
        if self.is_linear() {
            return Ok(ExtendedG {
                g: *self,
                a: 0.0,
                b: 0.0,
                c: 0.0,
            });
        }
        let (a, b, c) = (self.value(self.r), self.d1(self.r), self.d2(self.r));
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "G''(r) = {c} is not positive; cannot extend convexly"
            )));
        }
        Ok(ExtendedG { g: *self, a, b, c })
    }

    pub fn t_min(&self) -> f64 {
        T_MIN_REL * self.r
    }

    /// `G1(t) = ∫_t^r ds / (s G'(s))`, integrated in `y = ln(r/s)`.
    pub fn g1(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.r * (1.0 + 1e-15)) {
            return Err(Error::InvalidArgument(format!(
                "G1 needs t in (0, {}], got {t}",
                self.r
            )));
        }
        let upper = (self.r / t).ln().max(0.0);
        if let GFamily::Linear { k } = self.family {
            return Ok(upper / k);
        }
        let f = |y: f64| 1.0 / self.d1(self.r * (-y).exp());
        let mut acc = 0.0;
        let mut lo = 0.0;
        while lo < upper {
            let hi = (lo + 2.0).min(upper);
            acc += quad::integrate(f, lo, hi, 1e-300, 1e-13)?;
            lo = hi;
        }
        Ok(acc)
    }

    /// Inverse of `G1`. Values beyond `G1(t_min)` report saturation.
    pub fn g1_inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "G1 inverse needs y >= 0, got {y}"
            )));
        }
        if y == 0.0 {
            return Ok(self.r);
        }
        let t_min = self.t_min();
        let limit = self.g1(t_min)?;
        if y > limit {
            return Err(Error::Saturation { value: y, limit });
        }
        if let GFamily::Linear { k } = self.family {
            return Ok(self.r * (-k * y).exp());
        }
        // G1 decreases in t; bisect in ln t.
        let (mut lo, mut hi) = (t_min.ln(), self.r.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo < 1e-15 {
                break;
            }
            if self.g1(mid.exp())? > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

/// Extension of `G` to `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedG {
    g: GSpec,
    a: f64,
    b: f64,
    c: f64,
}

impl ExtendedG {
    pub fn spec(&self) -> &GSpec {
        &self.g
    }

    pub fn value(&self, t: f64) -> f64 {
        let r = self.g.r;
        if t <= r || self.g.is_linear() {
            return self.g.value(t);
        }
        let (a, b, c) = (self.a, self.b, self.c);
        0.5 * c * t * t + (b - c * r) * t + (a + 0.5 * c * r * r - b * r)
    }

    pub fn d1(&self, t: f64) -> f64 {
        if t <= self.g.r || self.g.is_linear() {
            return self.g.d1(t);
        }
        self.c * t + self.b - self.c * self.g.r
    }

    pub fn d2(&self, t: f64) -> f64 {
        if t <= self.g.r || self.g.is_linear() {
            return self.g.d2(t);
        }
        self.c
    }

    /// `(Ḡ')^{-1}(s)` on `[0, r]`.
    fn d1_inverse(&self, s: f64) -> Result<f64> {
        quad::bisect(|t| self.d1(t) - s, 0.0, self.g.r, 1e-15)
    }

    /// Young conjugate `Ḡ*(s) = s (Ḡ')^{-1}(s) - Ḡ((Ḡ')^{-1}(s))` for
    /// `s ∈ (0, Ḡ'(r)]`.
    pub fn conjugate(&self, s: f64) -> Result<f64> {
        if self.g.is_linear() {
            return Err(Error::InvalidArgument(
                "conjugate of a linear G is degenerate".into(),
            ));
        }
        let smax = self.d1(self.g.r);
        if !(s >= 0.0 && s <= smax * (1.0 + 1e-14)) {
            return Err(Error::InvalidArgument(format!(
                "conjugate argument {s} outside [0, {smax}]"
            )));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let t = self.d1_inverse(s.min(smax))?;
        Ok(s * t - self.value(t))
    }
}

/// Per-sample report of the inequality `g'(t) <= -ζ(t) G(g(t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A2Report {
    pub t: Vec<f64>,
    /// `g'(t) + ζ(t) G(g(t))`; `NaN` where `g(t) > r`.
    pub residual: Vec<f64>,
    pub out_of_domain: Vec<usize>,
    pub violations: Vec<usize>,
    pub max_residual: f64,
    pub ok: bool,
}

pub fn check_a2(spec: &KernelSpec, g_spec: &GSpec, grid: &[f64]) -> A2Report {
    let tol = 1e-10 * spec.g0();
    let mut rep = A2Report {
        t: grid.to_vec(),
        residual: Vec::with_capacity(grid.len()),
        out_of_domain: Vec::new(),
        violations: Vec::new(),
        max_residual: f64::NEG_INFINITY,
        ok: true,
    };
    for (i, &t) in grid.iter().enumerate() {
        let g = spec.value(t);
        if t <= 0.0 || g > g_spec.r {
            rep.residual.push(f64::NAN);
            if g > g_spec.r {
                rep.out_of_domain.push(i);
            }
            continue;
        }
        let res = spec.derivative(t) + g_spec.zeta.value(t) * g_spec.value(g);
        rep.max_residual = rep.max_residual.max(res);
        if res > tol {
            rep.violations.push(i);
        }
        rep.residual.push(res);
    }
    rep.ok = rep.violations.is_empty();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(c: f64, m: f64, r: f64) -> GSpec {
        GSpec::new(GFamily::Power { c, m }, r, Rate::Constant { c: 1.0 }).unwrap()
    }

    #[test]
    fn extension_examples() {
        let sq = power(1.0, 2.0, 1.0).extend().unwrap();
        for t in [0.3, 1.0, 2.0, 5.0] {
            assert!((sq.value(t) - t * t).abs() < 1e-12);
        }
        let cube = power(1.0, 3.0, 1.0).extend().unwrap();
        assert!((cube.value(2.0) - 7.0).abs() < 1e-12);
        let eps = 1e-7;
        let left = (cube.value(1.0) - cube.value(1.0 - eps)) / eps;
        let right = (cube.value(1.0 + eps) - cube.value(1.0)) / eps;
        assert!((left - right).abs() < 1e-5);
    }

    #[test]
    fn stretched_derivatives_match_finite_differences() {
        let g = GSpec::new(
            GFamily::Stretched { a: 0.1, p: 0.5 },
            0.05,
            Rate::Constant { c: 1.0 },
        )
        .unwrap();
        for t in [1e-4, 1e-3, 0.01, 0.04] {
            let h = 1e-6 * t;
            let fd1 = (g.value(t + h) - g.value(t - h)) / (2.0 * h);
            let fd2 = (g.d1(t + h) - g.d1(t - h)) / (2.0 * h);
            assert!((fd1 - g.d1(t)).abs() < 1e-6 * g.d1(t).abs());
            assert!((fd2 - g.d2(t)).abs() < 1e-5 * g.d2(t).abs());
        }
    }

    #[test]
    fn g1_examples() {
        let lin = GSpec::new(GFamily::Linear { k: 1.0 }, 1.0, Rate::Constant { c: 1.0 }).unwrap();
        assert!((lin.g1((-1f64).exp()).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lin.g1(1.0).unwrap(), 0.0);
        // c t^m: G1(t) = (t^{1-m} - r^{1-m}) / (c m (m - 1))
        let g = power(0.5, 2.0, 1.0);
        for t in [0.5, 1e-2, 1e-5] {
            let exact = (1.0 / t - 1.0) / (0.5 * 2.0);
            assert!((g.g1(t).unwrap() - exact).abs() < 1e-10 * exact.max(1.0));
        }
    }

    #[test]
    fn g1_stretched_bound_and_inverse() {
        let (a, p) = (0.1, 0.5);
        let g = GSpec::new(GFamily::Stretched { a, p }, 0.05, Rate::Constant { c: 1.0 }).unwrap();
        for t in [0.04, 1e-3, 1e-6, 1e-10] {
            let v = g.g1(t).unwrap();
            assert!(v <= (a / t).ln().powf(1.0 / p));
            let back = g.g1_inverse(v).unwrap();
            assert!((back - t).abs() <= 1e-8 * t);
        }
        let limit = g.g1(g.t_min()).unwrap();
        assert!(matches!(
            g.g1_inverse(2.0 * limit),
            Err(Error::Saturation { .. })
        ));
    }

    #[test]
    fn conjugate_examples() {
        let g = power(0.5, 2.0, 1.0).extend().unwrap();
        assert!((g.conjugate(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(g.conjugate(1e-9).unwrap() < 1e-15);
        assert!(g.conjugate(1.5).is_err());
    }

    #[test]
    fn a2_examples() {
        let k = KernelSpec::exponential(0.5, 1.0).unwrap();
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let lin =
            |z: f64| GSpec::new(GFamily::Linear { k: 1.0 }, 0.5, Rate::Constant { c: z }).unwrap();
        let rep = check_a2(&k, &lin(1.0), &grid);
        assert!(rep.ok && rep.max_residual.abs() < 1e-15);
        let rep = check_a2(&k, &lin(2.0), &grid);
        assert!(!rep.ok && rep.violations.len() == grid.len() - 1);

        let s = KernelSpec::stretched(0.1, 0.5).unwrap();
        let g = GSpec::new(
            GFamily::Stretched { a: 0.1, p: 0.5 },
            0.099,
            Rate::Constant { c: 1.0 },
        )
        .unwrap();
        let rep = check_a2(&s, &g, &grid);
        assert!(rep.ok, "max residual {}", rep.max_residual);
    }
}
