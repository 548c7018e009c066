//! Variable exponent fields `p(x)` and the variable-exponent Lebesgue
//! machinery: modular, Luxemburg norm, log-Hölder modulus and embedding
//! constants.

mod embedding;

pub use embedding::{
    default_mu, embedding_constants, estimate_embedding_constant, AscentOptions,
    EmbeddingConstants, EmbeddingEstimate, EmbeddingTarget,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid;

const HOLDER_PAIR_LIMIT: usize = 100_000;
const HOLDER_SEED: u64 = 0x005e_ed0f_401d;

/// How the upper exponent bound is treated on one- and two-dimensional grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionPolicy {
    /// The upper bound `2(n-1)/(n-2)` is void for `n <= 2`.
    #[default]
    Relaxed,
    /// Refuse `n < 3`.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentField {
    values: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    pub holder_a: f64,
}

impl ExponentField {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("exponent", "non-finite exponent value"));
        }
        let p1 = values.iter().copied().fold(f64::INFINITY, f64::min);
        let p2 = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let points: Vec<(f64, f64)> = (0..grid.len()).map(|k| grid.coords(k)).collect();
        let holder_a = log_holder_modulus(&points, &values)?;
        Ok(ExponentField {
            values,
            p1,
            p2,
            holder_a,
        })
    }

    pub fn constant(grid: &Grid, p: f64) -> Result<Self> {
        Self::from_values(grid, vec![p; grid.len()])
    }

    pub fn from_expr(grid: &Grid, e: &Expr) -> Result<Self> {
        if !e.is_time_independent() {
            return Err(Error::validation("exponent", "p(x) must not depend on t"));
        }
        Self::from_values(grid, grid.sample(e, 0.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.p1 == self.p2
    }
}

/// Exponent bounds and their admissibility in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PBounds {
    pub p1: f64,
    pub p2: f64,
    /// `2(n-1)/(n-2)`; `None` when void for `n <= 2`.
    pub upper: Option<f64>,
    pub valid: bool,
    /// Set when the upper bound was dropped because `n <= 2`.
    pub relaxed: bool,
}

pub fn p_bounds(field: &ExponentField, n: usize, policy: DimensionPolicy) -> Result<PBounds> {
    if n < 3 && policy == DimensionPolicy::Strict {
        return Err(Error::validation(
            "exponent.dimension_policy",
            format!("strict mode requires n >= 3, got n = {n}"),
        ));
    }
    let upper = (n >= 3).then(|| 2.0 * (n as f64 - 1.0) / (n as f64 - 2.0));
    let valid = field.p1 > 2.0 && upper.is_none_or(|u| field.p2 < u);
    Ok(PBounds {
        p1: field.p1,
        p2: field.p2,
        upper,
        valid,
        relaxed: n < 3,
    })
}

/// `A = max |p(x) - p(y)| · (-ln |x - y|)` over pairs with `0 < |x - y| < 1`.
/// Uses all pairs up to 10⁵ of them, else a fixed-seed random sample.
pub fn log_holder_modulus(points: &[(f64, f64)], p: &[f64]) -> Result<f64> {
    if points.len() != p.len() {
        return Err(Error::Shape {
            expected: points.len(),
            got: p.len(),
        });
    }
    let n = points.len();
    let pair = |i: usize, j: usize| {
        let d = ((points[i].0 - points[j].0).powi(2) + (points[i].1 - points[j].1).powi(2)).sqrt();
        if d > 0.0 && d < 1.0 {
            (p[i] - p[j]).abs() * (-d.ln())
        } else {
            0.0
        }
    };
    let total = n * n.saturating_sub(1) / 2;
    let mut a: f64 = 0.0;
    if total <= HOLDER_PAIR_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                a = a.max(pair(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(HOLDER_SEED);
        for _ in 0..HOLDER_PAIR_LIMIT {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            a = a.max(pair(i, j));
        }
        // neighbouring nodes carry the steepest local oscillation
        for i in 0..n - 1 {
            a = a.max(pair(i, i + 1));
        }
    }
    Ok(a)
}

/// `∫ |f|^{p(x)} dx` by the trapezoid rule.
pub fn modular(grid: &Grid, f: &[f64], p: &[f64]) -> Result<f64> {
    grid.check_len(f)?;
    grid.check_len(p)?;
    Ok(modular_unchecked(grid, f, p, 1.0))
}

fn modular_unchecked(grid: &Grid, f: &[f64], p: &[f64], scale: f64) -> f64 {
    f.iter()
        .zip(p)
        .zip(grid.weights())
        .map(|((v, e), w)| {
            if *v == 0.0 {
                0.0
            } else {
                w * (v.abs() / scale).powf(*e)
            }
        })
        .sum()
}

/// Luxemburg norm `inf{λ > 0 : ∫ |f/λ|^{p(x)} <= 1}` by bisection in `ln λ`.
pub fn luxemburg_norm(grid: &Grid, f: &[f64], p: &[f64]) -> Result<f64> {
    grid.check_len(f)?;
    grid.check_len(p)?;
    if f.iter()
        .zip(grid.weights())
        .all(|(v, w)| *v == 0.0 || *w == 0.0)
    {
        return Ok(0.0);
    }
    let excess = |ln_l: f64| modular_unchecked(grid, f, p, ln_l.exp()) - 1.0;
    let (mut lo, mut hi) = (1e-12f64.ln(), 1e12f64.ln());
    for _ in 0..60 {
        if excess(lo) > 0.0 {
            break;
        }
        lo -= 10.0;
    }
    for _ in 0..60 {
        if excess(hi) < 0.0 {
            break;
        }
        hi += 10.0;
    }
    if !(excess(lo) > 0.0 && excess(hi) <= 0.0) {
        return Err(Error::Bisection(format!(
            "Luxemburg bracket failed: modular excess {} at e^{lo}, {} at e^{hi}",
            excess(lo),
            excess(hi)
        )));
    }
    // relative tolerance 1e-12 on λ is an absolute one on ln λ
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NestingReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `‖f‖_{p(x)} <= (|Ω| + 1) ‖f‖_{q(x)}` for `p <= q`.
pub fn check_nesting(grid: &Grid, f: &[f64], q: &[f64], p: &[f64]) -> Result<NestingReport> {
    grid.check_len(q)?;
    grid.check_len(p)?;
    if let Some(k) = p.iter().zip(q).position(|(a, b)| a > b) {
        return Err(Error::InvalidArgument(format!(
            "nesting needs p <= q pointwise; p = {} > q = {} at node {k}",
            p[k], q[k]
        )));
    }
    let lhs = luxemburg_norm(grid, f, p)?;
    let rhs = (grid.measure() + 1.0) * luxemburg_norm(grid, f, q)?;
    Ok(NestingReport {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Grid {
        Grid::new_1d(1.0, 64).unwrap()
    }

    #[test]
    fn bounds_examples() {
        let g = unit();
        let f = ExponentField::constant(&g, 3.0).unwrap();
        let b = p_bounds(&f, 3, DimensionPolicy::Strict).unwrap();
        assert!(b.valid && b.upper == Some(4.0) && b.p1 == 3.0 && b.p2 == 3.0);
        let two = ExponentField::constant(&g, 2.0).unwrap();
        for n in 1..=4 {
            assert!(!p_bounds(&two, n, DimensionPolicy::Relaxed).unwrap().valid);
        }
        let aff = ExponentField::from_expr(&g, &Expr::parse("2.5 + 0.5*x").unwrap()).unwrap();
        let b = p_bounds(&aff, 1, DimensionPolicy::Relaxed).unwrap();
        assert!(b.valid && b.relaxed && (b.p1 - 2.5).abs() < 1e-15 && (b.p2 - 3.0).abs() < 1e-15);
        assert!(p_bounds(&aff, 1, DimensionPolicy::Strict).is_err());
    }

    #[test]
    fn holder_examples() {
        let g = unit();
        assert_eq!(ExponentField::constant(&g, 3.0).unwrap().holder_a, 0.0);
        let a = log_holder_modulus(&[(0.0, 0.0), (0.5, 0.0)], &[3.0, 3.1]).unwrap();
        assert!((a - 0.1 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn modular_and_norm_examples() {
        let g = unit();
        let n = g.len();
        let three = vec![3.0; n];
        assert_eq!(modular(&g, &vec![0.0; n], &three).unwrap(), 0.0);
        assert!((modular(&g, &vec![1.0; n], &three).unwrap() - 1.0).abs() < 1e-14);
        assert!((modular(&g, &vec![2.0; n], &three).unwrap() - 8.0).abs() < 1e-13);
        assert!((luxemburg_norm(&g, &vec![2.0; n], &three).unwrap() - 2.0).abs() < 1e-11);
        assert_eq!(luxemburg_norm(&g, &vec![0.0; n], &three).unwrap(), 0.0);
        // p ≡ 2 with ∫ f² = 4
        let two = vec![2.0; n];
        let f = vec![2.0; n];
        assert!((luxemburg_norm(&g, &f, &two).unwrap() - 2.0).abs() < 1e-11);
        assert!(modular(&g, &f[1..], &two).is_err());
    }

    #[test]
    fn nesting_examples() {
        let g = unit();
        let n = g.len();
        let rep = check_nesting(&g, &vec![1.0; n], &vec![3.0; n], &vec![2.0; n]).unwrap();
        assert!(rep.pass && (rep.lhs - 1.0).abs() < 1e-11 && (rep.rhs - 2.0).abs() < 1e-10);
        let rep = check_nesting(&g, &vec![0.0; n], &vec![3.0; n], &vec![2.0; n]).unwrap();
        assert!(rep.pass && rep.lhs == 0.0);
        assert!(check_nesting(&g, &vec![1.0; n], &vec![2.0; n], &vec![3.0; n]).is_err());
    }
}
