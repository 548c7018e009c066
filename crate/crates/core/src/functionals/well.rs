use std::f64::consts::E;

use serde::Serialize;

use super::EnergyRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellConstants {
    pub mu: f64,
    pub p1: f64,
    pub p2: f64,
    pub alpha: f64,
    /// `B_{p2+μ} ℓ^{-(p2+μ)/2}`
    pub b: f64,
    pub lambda1: f64,
    pub e1: f64,
    pub lambda2_observed: f64,
    pub ctilde: f64,
    /// False when `2αλ₂^{p2+μ-2}B/(eμp1) >= 1`; `ctilde` is then infinite.
    pub ctilde_applicable: bool,
}

impl WellConstants {
    /// `R(λ) = λ²/2 - αB/(eμp1) λ^{p2+μ}`
    pub fn r(&self, lambda: f64) -> f64 {
        0.5 * lambda * lambda
            - self.alpha * self.b / (E * self.mu * self.p1) * lambda.powf(self.p2 + self.mu)
    }
}

/// Potential-well constants. `b_p2_mu` is the embedding constant
/// `B_{p2+μ}` and `lambda2_observed` the largest `λ(t)` seen on the run.
pub fn well_constants(
    ell: f64,
    p1: f64,
    p2: f64,
    mu: f64,
    b_p2_mu: f64,
    alpha: f64,
    lambda2_observed: f64,
) -> Result<WellConstants> {
    if !(ell > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ℓ must be positive, got {ell}"
        )));
    }
    if !(mu > 0.0 && p1 > 2.0 && p2 >= p1 && b_p2_mu > 0.0 && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "well constants need μ > 0, 2 < p1 <= p2, B > 0, α >= 0; got μ = {mu}, p1 = {p1}, p2 = {p2}, B = {b_p2_mu}, α = {alpha}"
        )));
    }
    let k = p2 + mu;
    let b = b_p2_mu * ell.powf(-0.5 * k);
    let lambda1 = if alpha > 0.0 {
        (E * mu * p1 / (alpha * k * b)).powf(1.0 / (k - 2.0))
    } else {
        f64::INFINITY
    };
    let e1 = (0.5 - 1.0 / k) * lambda1 * lambda1;
    let x = 2.0 * alpha * lambda2_observed.powf(k - 2.0) * b / (E * mu * p1);
    let ctilde_applicable = x < 1.0;
    let ctilde = if ctilde_applicable {
        x / (1.0 - x)
    } else {
        f64::INFINITY
    };
    Ok(WellConstants {
        mu,
        p1,
        p2,
        alpha,
        b,
        lambda1,
        e1,
        lambda2_observed,
        ctilde,
        ctilde_applicable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub t: Vec<f64>,
    /// `E(t) - R(λ(t))` with a negative discrete kinetic part dropped.
    pub margin: Vec<f64>,
    pub min_margin: f64,
    /// `E(t) - R(λ(t))` as recorded.
    pub min_raw_margin: f64,
    pub pass: bool,
}

/// The inequality only uses that the kinetic energy is non-negative. The
/// scheme's time-averaged kinetic energy can dip below zero by `O(dt²)`
/// when `u_t ≈ 0`, so that part is clipped at zero for the check.
pub fn check_lemma_2_6(energy: &[EnergyRecord], wc: &WellConstants) -> MarginReport {
    let e0 = energy.first().map_or(0.0, |r| r.e);
    let raw: Vec<f64> = energy.iter().map(|r| r.e - wc.r(r.lambda)).collect();
    let margin: Vec<f64> = energy
        .iter()
        .zip(&raw)
        .map(|(r, m)| m - r.kinetic.min(0.0))
        .collect();
    let min = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().copied().fold(f64::INFINITY, f64::min)
        }
    };
    MarginReport {
        t: energy.iter().map(|r| r.t).collect(),
        pass: margin.iter().all(|m| *m >= -1e-8 * e0.max(1.0)),
        min_margin: min(&margin),
        min_raw_margin: min(&raw),
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellReport {
    /// `E(0) < E1` and `λ(0) < λ₁`.
    pub applicable: bool,
    pub lambda_max: f64,
    /// `λ₁ - sup λ(t)`
    pub lambda_gap: f64,
    pub lambda_ratio: f64,
    pub lambda_below: bool,
    /// `max_t (α∫|u|^p log|u|/p - C̃ E(0))`
    pub log_excess: f64,
    /// `max_t (𝔼(t) - (1 + C̃) E(0))`
    pub aux_excess: f64,
    pub energy_bounded: bool,
    pub pass: bool,
}

pub fn check_lemma_2_7_and_2_8(energy: &[EnergyRecord], wc: &WellConstants) -> WellReport {
    let tol = 1e-8;
    let (e0, lam0) = energy.first().map_or((0.0, 0.0), |r| (r.e, r.lambda));
    let applicable = e0 < wc.e1 && lam0 < wc.lambda1;
    let lambda_max = energy.iter().map(|r| r.lambda).fold(0.0, f64::max);
    let log_excess = energy
        .iter()
        .map(|r| r.log_term - wc.ctilde * e0)
        .fold(f64::NEG_INFINITY, f64::max);
    let aux_excess = energy
        .iter()
        .map(|r| r.aux_e - (1.0 + wc.ctilde) * e0)
        .fold(f64::NEG_INFINITY, f64::max);
    let energy_bounded = energy.iter().all(|r| r.e >= -tol && r.e <= e0 + tol);
    let lambda_below = lambda_max < wc.lambda1;
    let pass =
        applicable && lambda_below && log_excess <= tol && aux_excess <= tol && energy_bounded;
    WellReport {
        applicable,
        lambda_max,
        lambda_gap: wc.lambda1 - lambda_max,
        lambda_ratio: if wc.lambda1.is_finite() {
            lambda_max / wc.lambda1
        } else {
            0.0
        },
        lambda_below,
        log_excess: if energy.is_empty() { 0.0 } else { log_excess },
        aux_excess: if energy.is_empty() { 0.0 } else { aux_excess },
        energy_bounded,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda1_example() {
        let wc = well_constants(1.0, 3.0, 3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((wc.lambda1 - (3.0 * E / 4.0).sqrt()).abs() < 1e-14);
        assert!((wc.e1 - 3.0 * E / 16.0).abs() < 1e-14);
        assert_eq!(wc.ctilde, 0.0);
        // R'(λ₁) = 0 by central difference
        let h = 1e-6;
        assert!(((wc.r(wc.lambda1 + h) - wc.r(wc.lambda1 - h)) / (2.0 * h)).abs() < 1e-8);
        assert!((wc.r(wc.lambda1) - wc.e1).abs() < 1e-14);
        let doubled = well_constants(1.0, 3.0, 3.0, 1.0, 1.0, 2.0, 0.0).unwrap();
        assert!((doubled.lambda1 / wc.lambda1 - 2f64.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn ctilde_gate() {
        let wc = well_constants(1.0, 3.0, 3.0, 1.0, 1.0, 1.0, 10.0).unwrap();
        assert!(!wc.ctilde_applicable && wc.ctilde.is_infinite());
    }

    #[test]
    fn margin_reports() {
        let wc = well_constants(1.0, 3.0, 3.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let zero = vec![EnergyRecord::default(); 3];
        let rep = check_lemma_2_6(&zero, &wc);
        assert!(rep.pass && rep.margin.iter().all(|m| *m == 0.0));
        assert!(check_lemma_2_7_and_2_8(&zero, &wc).pass);
        let bad = vec![EnergyRecord {
            e: 0.0,
            lambda: 1.0,
            ..Default::default()
        }];
        assert!(!check_lemma_2_6(&bad, &wc).pass);
        let high = vec![EnergyRecord {
            e: 10.0,
            ..Default::default()
        }];
        assert!(!check_lemma_2_7_and_2_8(&high, &wc).applicable);
    }
}
