use serde::Serialize;

use super::{fit_range, DecayModel, ROUNDOFF};
use crate::error::{Error, Result};
use crate::quad;

/// Model used to extend `∫_t^∞` past the end of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    Exponential,
    Algebraic,
}

const REL_TOL: f64 = 1e-8;
/// Allowed step-to-step increase before a series counts as non-monotone.
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KomornikReport {
    pub sigma: f64,
    pub omega: f64,
    /// Largest `ω` for which the integral hypothesis holds on the series.
    pub omega_max: f64,
    pub tail_model: TailModel,
    /// Extrapolated `∫_T^∞ φ' E^{1+σ}`.
    pub beyond_horizon: f64,
    /// Records used after discarding round-off.
    pub used: usize,
    /// `ω ∫_t^∞ φ' E^{1+σ} / (E(0)^σ E(t)) - 1`
    #[serde(skip)]
    pub hypothesis_residual: Vec<f64>,
    pub max_hypothesis_residual: f64,
    pub hypothesis_holds: bool,
    #[serde(skip)]
    pub conclusion_bound: Vec<f64>,
    /// `min(0, min_t (bound - E))`
    pub conclusion_violation: f64,
    pub conclusion_holds: bool,
}

/// Integral-inequality lemma for a non-increasing `E` with `φ` and `φ'`
/// sampled at the same times. With `omega = None` the largest admissible
/// `ω` measured on the series is used.
pub fn check_komornik(
    t: &[f64],
    e: &[f64],
    phi: &[f64],
    dphi: &[f64],
    sigma: f64,
    omega: Option<f64>,
    tail_model: TailModel,
) -> Result<KomornikReport> {
    let n = t.len();
    for len in [e.len(), phi.len(), dphi.len()] {
        if len != n {
            return Err(Error::Shape {
                expected: n,
                got: len,
            });
        }
    }
    if n < 20 {
        return Err(Error::InvalidArgument(format!(
            "need at least 20 samples, got {n}"
        )));
    }
    if !(sigma >= 0.0) || omega.is_some_and(|w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("need σ >= 0 and ω > 0".into()));
    }
    let e0 = e[0];
    if !(e0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "E(0) = {e0} is not positive"
        )));
    }
    if let Some(i) = e.windows(2).position(|w| w[1] > w[0] + MONOTONE_SLACK * e0) {
        return Err(Error::InvalidArgument(format!(
            "E increases at t = {}: {} -> {}",
            t[i + 1],
            e[i],
            e[i + 1]
        )));
    }
    let used = e.iter().position(|v| !(*v > ROUNDOFF * e0)).unwrap_or(n);
    if used < 20 {
        return Err(Error::InvalidArgument(format!(
            "only {used} samples above round-off"
        )));
    }
    let (t_u, e_u) = (&t[..used], &e[..used]);
    let y: Vec<f64> = e_u
        .iter()
        .zip(&dphi[..used])
        .map(|(v, d)| d * v.powf(1.0 + sigma))
        .collect();

    // Extrapolate ∫_T^∞ from a fit over the last tenth of the samples.
    let a = used - (used / 10).max(4).min(used);
    let beyond = if y[used - 1] <= 0.0 {
        0.0
    } else {
        let model = match tail_model {
            TailModel::Exponential => DecayModel::Exponential,
            TailModel::Algebraic => DecayModel::Algebraic,
        };
        let fit = fit_range(t_u, &y, a.min(used.saturating_sub(20)), used - 1, &model)?;
        let last = y[used - 1];
        match tail_model {
            TailModel::Exponential if fit.rate > 0.0 => last / fit.rate,
            TailModel::Algebraic if fit.rate > 1.0 => {
                last * (1.0 + t_u[used - 1]) / (fit.rate - 1.0)
            }
            _ => f64::INFINITY,
        }
    };
    let pieces = quad::log_cubic_intervals(t_u, &y);
    let mut tail = vec![0.0; used];
    tail[used - 1] = beyond;
    for i in (0..used - 1).rev() {
        tail[i] = tail[i + 1] + pieces[i];
    }

    let scale = e0.powf(sigma);
    let omega_max = tail
        .iter()
        .zip(e_u)
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, v)| scale * v / s)
        .fold(f64::INFINITY, f64::min);
    let omega = omega.unwrap_or(omega_max);
    let hypothesis_residual: Vec<f64> = tail
        .iter()
        .zip(e_u)
        .map(|(s, v)| omega * s / (scale * v) - 1.0)
        .collect();
    let max_hypothesis_residual = hypothesis_residual
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let hypothesis_holds = omega.is_finite() && omega > 0.0 && max_hypothesis_residual <= REL_TOL;

    let conclusion_bound: Vec<f64> = phi
        .iter()
        .map(|f| {
            if sigma == 0.0 {
                e0 * (1.0 - omega * f).exp()
            } else {
                e0 * ((1.0 + sigma) / (1.0 + omega * sigma * f)).powf(1.0 / sigma)
            }
        })
        .collect();
    let conclusion_violation = conclusion_bound
        .iter()
        .zip(e)
        .map(|(b, v)| b - v)
        .fold(0.0, f64::min);
    Ok(KomornikReport {
        sigma,
        omega,
        omega_max,
        tail_model,
        beyond_horizon: beyond,
        used,
        hypothesis_residual,
        max_hypothesis_residual,
        hypothesis_holds,
        conclusion_bound,
        conclusion_violation,
        conclusion_holds: hypothesis_holds && conclusion_violation >= -REL_TOL * e0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times() -> Vec<f64> {
        (0..=5000).map(|i| i as f64 * 0.01).collect()
    }

    #[test]
    fn exact_exponential() {
        let t = times();
        let w = 0.8;
        let e: Vec<f64> = t.iter().map(|s| 2.0 * (-w * s).exp()).collect();
        let ones = vec![1.0; t.len()];
        let rep = check_komornik(&t, &e, &t, &ones, 0.0, Some(w), TailModel::Exponential).unwrap();
        assert!(rep.hypothesis_holds, "{}", rep.max_hypothesis_residual);
        assert!(rep.max_hypothesis_residual.abs() < 1e-8);
        assert!(rep.conclusion_holds);
        assert!((rep.omega_max - w).abs() < 1e-8);
    }

    #[test]
    fn exact_algebraic() {
        let t = times();
        let e: Vec<f64> = t.iter().map(|s| 3.0 * (1.0 + s).powi(-2)).collect();
        let ones = vec![1.0; t.len()];
        // ∫_t^∞ E^{3/2} = E(0)^{3/2} (1+t)^{-2} / 2 = E(0)^{1/2} E(t) / 2
        let rep = check_komornik(&t, &e, &t, &ones, 0.5, Some(2.0), TailModel::Algebraic).unwrap();
        assert!(rep.hypothesis_holds, "{}", rep.max_hypothesis_residual);
        assert!(rep.conclusion_holds);
        assert!((rep.omega_max - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_and_increasing_series() {
        let t = times();
        let ones = vec![1.0; t.len()];
        let e = vec![1.0; t.len()];
        for w in [1e-6, 1.0, 10.0] {
            let rep =
                check_komornik(&t, &e, &t, &ones, 0.0, Some(w), TailModel::Exponential).unwrap();
            assert!(!rep.hypothesis_holds && !rep.conclusion_holds);
        }
        let up: Vec<f64> = t.iter().map(|s| 1.0 + s).collect();
        assert!(check_komornik(&t, &up, &t, &ones, 0.0, None, TailModel::Exponential).is_err());
    }
}
