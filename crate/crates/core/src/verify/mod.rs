//! Decay-rate fitting and theorem verdicts.
//!
//! The decay theorems assert that constants exist without giving values, so
//! every check calibrates its constant(s) on the simulated series and then
//! requires the resulting bound to dominate the energy everywhere.

mod komornik;
mod theorems;

pub use komornik::{check_komornik, KomornikReport, TailModel};
pub use theorems::{
    check_example_stretched, check_thm_3_1, check_thm_3_2, check_thm_general_decay, AlphaGate,
    ExampleReport,
};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::EnergyRecord;
use crate::kernels::GSpec;
use crate::quad;

/// Energies below this fraction of `E(0)` are treated as round-off.
pub const ROUNDOFF: f64 = 1e-14;
/// Fraction of the horizon covered by the default tail window.
pub const TAIL_FRACTION: f64 = 0.6;
const MIN_TAIL_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayModel {
    /// `ln E` linear in `t`
    Exponential,
    /// `ln E` linear in `ln(1 + t)`
    Algebraic,
    /// `ln E` linear in `t^p`
    Stretched { p: f64 },
    /// `G1(r E / E(t_a))` linear in `∫_{t_a}^t ζ`
    GeneralG1 { g: GSpec },
}

impl DecayModel {
    pub fn name(&self) -> &'static str {
        match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Algebraic => "algebraic",
            DecayModel::Stretched { .. } => "stretched",
            DecayModel::GeneralG1 { .. } => "general_g1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Positive decay parameter: the exponential rate, the algebraic
    /// exponent, the stretched `k` in `e^{-k t^p}`, or `k1` for `G1`.
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `None` when the linearized data has no variance.
    pub r2: Option<f64>,
    pub t_a: f64,
    pub t_b: f64,
    pub points: usize,
    /// The window was cut short because `E` reached round-off.
    pub shrunk: bool,
    /// The fit is degenerate (`r2` undefined).
    pub flagged: bool,
}

/// Index range of the default tail window: the last 60% of the span over
/// which `E` stays above round-off.
pub fn tail_window(t: &[f64], e: &[f64]) -> Result<(usize, usize, bool)> {
    if t.len() != e.len() || t.is_empty() {
        return Err(Error::Shape {
            expected: t.len(),
            got: e.len(),
        });
    }
    let floor = ROUNDOFF * e[0].abs();
    let valid = e.iter().position(|v| !(*v > floor)).unwrap_or(e.len());
    if valid == 0 {
        return Err(Error::InvalidArgument(
            "energy is not positive at the first record".into(),
        ));
    }
    let end = valid - 1;
    let start_t = t[end] - TAIL_FRACTION * (t[end] - t[0]);
    let start = t[..=end].iter().position(|s| *s >= start_t).unwrap_or(end);
    Ok((start, end, valid < e.len()))
}

/// Fits the default tail window.
pub fn fit_tail(t: &[f64], e: &[f64], model: &DecayModel) -> Result<DecayFit> {
    let (a, b, shrunk) = tail_window(t, e)?;
    let mut fit = fit_range(t, e, a, b, model)?;
    fit.shrunk = shrunk;
    Ok(fit)
}

/// Fits records `a..=b` in the model's linearizing coordinates.
pub fn fit_range(t: &[f64], e: &[f64], a: usize, b: usize, model: &DecayModel) -> Result<DecayFit> {
    if b >= t.len() || a > b {
        return Err(Error::InvalidArgument(format!(
            "bad window {a}..={b} for {} records",
            t.len()
        )));
    }
    let n = b - a + 1;
    if n < MIN_TAIL_POINTS {
        return Err(Error::InvalidArgument(format!(
            "tail window holds {n} records, need at least {MIN_TAIL_POINTS}"
        )));
    }
    let (ts, es) = (&t[a..=b], &e[a..=b]);
    if let Some(v) = es.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "energy {v} is not positive on the tail window"
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = match model {
        DecayModel::Exponential => (ts.to_vec(), es.iter().map(|v| v.ln()).collect()),
        DecayModel::Algebraic => (
            ts.iter().map(|s| s.ln_1p()).collect(),
            es.iter().map(|v| v.ln()).collect(),
        ),
        DecayModel::Stretched { p } => (
            ts.iter().map(|s| s.powf(*p)).collect(),
            es.iter().map(|v| v.ln()).collect(),
        ),
        DecayModel::GeneralG1 { g } => {
            let scale = g.r / es[0];
            let y = es
                .iter()
                .map(|v| g.g1((v * scale).clamp(g.t_min(), g.r)))
                .collect::<Result<Vec<_>>>()?;
            (ts.iter().map(|s| g.zeta.integral(ts[0], *s)).collect(), y)
        }
    };
    let mut line = quad::fit_line(&x, &y)
        .ok_or_else(|| Error::InvalidArgument("tail abscissae are degenerate".into()))?;
    if y.iter().all(|v| *v == y[0]) {
        line.slope = 0.0;
        line.intercept = y[0];
        line.r2 = None;
    }
    let rate = match model {
        DecayModel::GeneralG1 { .. } => line.slope,
        _ => -line.slope,
    };
    Ok(DecayFit {
        model: *model,
        rate,
        slope: line.slope,
        intercept: line.intercept,
        r2: line.r2.map(|r| r.clamp(0.0, 1.0)),
        t_a: ts[0],
        t_b: ts[n - 1],
        points: n,
        shrunk: false,
        flagged: line.r2.is_none(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Hypothesis {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Hypothesis {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremVerdict {
    pub theorem: String,
    pub hypotheses: Vec<Hypothesis>,
    pub constants: BTreeMap<String, f64>,
    /// Bound curve at the input times; `NaN` where it is not defined.
    #[serde(skip)]
    pub bound: Vec<f64>,
    /// `min(0, min_t (bound - E))`
    pub max_violation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl TheoremVerdict {
    fn new(theorem: &str, hypotheses: Vec<Hypothesis>) -> Self {
        TheoremVerdict {
            theorem: theorem.into(),
            hypotheses,
            constants: BTreeMap::new(),
            bound: Vec::new(),
            max_violation: 0.0,
            tolerance: 0.0,
            verdict: Verdict::NotApplicable,
            notes: Vec::new(),
        }
    }

    fn gated(&self) -> bool {
        self.hypotheses.iter().all(|h| h.pass)
    }

    fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.into(), value);
    }

    /// Records the bound, its worst violation against `e`, and the verdict.
    fn settle(&mut self, e: &[f64], bound: Vec<f64>, tol: f64, extra_ok: bool) {
        self.max_violation = e
            .iter()
            .zip(&bound)
            .filter(|(_, b)| b.is_finite())
            .map(|(v, b)| b - v)
            .fold(0.0, f64::min);
        self.tolerance = tol;
        self.bound = bound;
        self.verdict = if !self.gated() {
            Verdict::NotApplicable
        } else if extra_ok && self.max_violation >= -tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    }
}

/// Splits an energy series into times and values.
pub fn series(energy: &[EnergyRecord]) -> (Vec<f64>, Vec<f64>) {
    energy.iter().map(|r| (r.t, r.e)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{GFamily, Rate};

    fn times() -> Vec<f64> {
        (0..=1000).map(|i| i as f64 * 0.01).collect()
    }

    #[test]
    fn exponential_rate() {
        let t = times();
        let e: Vec<f64> = t.iter().map(|s| (-2.0 * s).exp()).collect();
        let fit = fit_tail(&t, &e, &DecayModel::Exponential).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!(fit.r2.unwrap() > 1.0 - 1e-12);
        assert!((fit.t_a - 4.0).abs() < 1e-9 && fit.t_b == 10.0 && !fit.shrunk);
    }

    #[test]
    fn algebraic_exponent() {
        let t = times();
        let e: Vec<f64> = t.iter().map(|s| (1.0 + s).powi(-3)).collect();
        let fit = fit_tail(&t, &e, &DecayModel::Algebraic).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6);
    }

    #[test]
    fn stretched_and_g1_parameters() {
        let t = times();
        let e: Vec<f64> = t.iter().map(|s| 2.0 * (-1.5 * s.sqrt()).exp()).collect();
        let fit = fit_tail(&t, &e, &DecayModel::Stretched { p: 0.5 }).unwrap();
        assert!((fit.rate - 1.5).abs() < 1e-6);
        // G linear: G1 = ln(r/t)/k, so G1(rE/E_a) = 3 (t - t_a) / k for E = e^{-3t}
        let g = GSpec::new(GFamily::Linear { k: 1.0 }, 0.5, Rate::Constant { c: 1.0 }).unwrap();
        let e: Vec<f64> = t.iter().map(|s| (-3.0 * s).exp()).collect();
        let fit = fit_tail(&t, &e, &DecayModel::GeneralG1 { g }).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6);
    }

    #[test]
    fn constant_series_is_flagged() {
        let t = times();
        let e = vec![1.5; t.len()];
        let fit = fit_tail(&t, &e, &DecayModel::Exponential).unwrap();
        assert_eq!(fit.rate, 0.0);
        assert!(fit.flagged && fit.r2.is_none());
    }

    #[test]
    fn window_shrinks_at_roundoff() {
        let t = times();
        let e: Vec<f64> = t
            .iter()
            .map(|s| if *s < 5.0 { (-2.0 * s).exp() } else { 0.0 })
            .collect();
        let fit = fit_tail(&t, &e, &DecayModel::Exponential).unwrap();
        assert!(fit.shrunk && fit.t_b < 5.0);
        assert!((fit.rate - 2.0).abs() < 1e-6);
        let short = &e[..10];
        assert!(fit_tail(&t[..10], short, &DecayModel::Exponential).is_err());
    }
}
