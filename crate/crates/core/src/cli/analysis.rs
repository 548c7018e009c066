//! Post-run checks: energy functionals, potential-well lemmas, proof
//! identities and the decay verdicts.

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Check, RunConfig};
use crate::error::{Error, Result};
use crate::exponents::{embedding_constants, AscentOptions, EmbeddingConstants};
use crate::functionals::{
    check_i_rates, check_lemma_2_6, check_lemma_2_7_and_2_8, energy_rate_check, energy_series,
    j_decomposition, max_energy_increase, proof_constants, proof_functionals, residual_elasticity,
    ConstantInputs, DiagnosticsRecord, EnergyRecord, ProofConstants, WellConstants,
};
use crate::kernels::KernelFamily;
use crate::solver::Trajectory;
use crate::verify::{
    check_example_stretched, check_komornik, check_thm_3_1, check_thm_3_2, check_thm_general_decay,
    fit_tail, series, AlphaGate, DecayFit, DecayModel, TailModel, TheoremVerdict, Verdict,
};

/// Per-step energy increase tolerated by the dissipation check, relative to `E(0)`.
pub const DISSIPATION_SLACK: f64 = 1e-9;
/// Relative tolerance on the `J` identity.
pub const J_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
    Error,
}

impl From<Verdict> for Status {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Fail => Status::Fail,
            Verdict::NotApplicable => Status::NotApplicable,
        }
    }
}

impl Status {
    fn of(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotApplicable => "not_applicable",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: &'static str,
    pub status: Status,
    pub report: Value,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub energy: Vec<EnergyRecord>,
    pub diagnostics: Option<Vec<DiagnosticsRecord>>,
    pub ell: f64,
    pub embedding: Option<EmbeddingConstants>,
    pub well: Option<WellConstants>,
    pub proof: Option<ProofConstants>,
    pub checks: Vec<CheckResult>,
    /// Bound curves aligned with `energy`, keyed by check id.
    pub bounds: Vec<(&'static str, Vec<f64>)>,
    pub fits: Vec<DecayFit>,
}

impl Analysis {
    pub fn status(&self, check: Check) -> Option<Status> {
        self.checks
            .iter()
            .find(|c| c.id == check.id())
            .map(|c| c.status)
    }

    /// No check failed or errored.
    pub fn all_pass(&self) -> bool {
        self.checks
            .iter()
            .all(|c| matches!(c.status, Status::Pass | Status::NotApplicable))
    }
}

fn failure(id: &'static str, err: &Error) -> CheckResult {
    CheckResult {
        id,
        status: Status::Error,
        report: json!({ "error": err.to_string() }),
    }
}

fn not_applicable(id: &'static str, why: &str) -> CheckResult {
    CheckResult {
        id,
        status: Status::NotApplicable,
        report: json!({ "reason": why }),
    }
}

fn verdict_result(id: &'static str, v: &TheoremVerdict) -> CheckResult {
    CheckResult {
        id,
        status: v.verdict.into(),
        report: serde_json::to_value(v).unwrap_or(Value::Null),
    }
}

pub fn analyze(cfg: &RunConfig, traj: &Trajectory) -> Result<Analysis> {
    let sim = &cfg.sim;
    let energy = energy_series(traj)?;
    let ell = residual_elasticity(&sim.kernel)?;
    let (t, e) = series(&energy);
    let e0 = e.first().copied().unwrap_or(0.0);
    let lambda_max = energy.iter().map(|r| r.lambda).fold(0.0, f64::max);

    let embedding = if sim.exponent.p1 > 2.0 {
        let opts = AscentOptions {
            restarts: cfg.embed_restarts,
            max_iter: cfg.embed_max_iter,
            seed: cfg.seed,
        };
        Some(embedding_constants(
            &sim.grid,
            &sim.exponent,
            cfg.mu,
            &opts,
        )?)
    } else {
        None
    };
    let well = embedding
        .as_ref()
        .map(|c| {
            crate::functionals::well_constants(
                ell,
                sim.exponent.p1,
                sim.exponent.p2,
                c.mu,
                c.b_p2_mu,
                sim.alpha,
                lambda_max,
            )
        })
        .transpose()?;
    let proof = match (&embedding, &well) {
        (Some(c), Some(w)) if w.ctilde.is_finite() => {
            let g1 = if sim.kernel.is_zero() {
                0.0
            } else {
                sim.kernel.integral_to(cfg.proof.t1)?
            };
            let inputs = ConstantInputs {
                ell,
                g0: sim.kernel.g0(),
                g1,
                p1: sim.exponent.p1,
                p2: sim.exponent.p2,
                mu: c.mu,
                b2: c.b2,
                b_p2_mu: c.b_p2_mu,
                b_2p2_mu: c.b_2p2_mu,
                b_px: c.b_px,
                e0,
                ctilde: w.ctilde,
                xi0: cfg.xi_spec.map_or(1.0, |x| x.xi.value(0.0)),
                q: cfg.xi_spec.map_or(1.0, |x| x.q),
            };
            Some(proof_constants(&inputs, &cfg.proof)?)
        }
        _ => None,
    };
    let gate = Some(AlphaGate {
        alpha: sim.alpha,
        bound: proof.map_or(0.0, |p| p.alpha_bound),
    });
    let diagnostics = match &proof {
        Some(p) if sim.diagnostics && !sim.kernel.is_zero() => Some(proof_functionals(
            traj,
            &energy,
            &sim.kernel,
            ell,
            &cfg.proof,
            &p.multipliers,
            cfg.g_spec.as_ref(),
        )?),
        _ => None,
    };

    let mut checks = Vec::new();
    let mut bounds = Vec::new();
    for &check in &cfg.verify {
        let id = check.id();
        let result = match check {
            Check::Energy => {
                let increase = max_energy_increase(&energy);
                let rate = if sim.diagnostics && energy.len() >= 3 {
                    Some(energy_rate_check(traj)?.max_abs / e0.abs().max(f64::MIN_POSITIVE))
                } else {
                    None
                };
                let pass = !(increase > DISSIPATION_SLACK);
                CheckResult {
                    id,
                    status: Status::of(pass),
                    report: json!({
                        "max_relative_increase": increase,
                        "slack": DISSIPATION_SLACK,
                        "rate_residual_relative": rate,
                        "e0": e0,
                        "e_final": e.last(),
                    }),
                }
            }
            Check::Wells => match &well {
                None => not_applicable(id, "needs p1 > 2"),
                Some(w) => {
                    let margin = check_lemma_2_6(&energy, w);
                    let rep = check_lemma_2_7_and_2_8(&energy, w);
                    let status = if !rep.applicable {
                        Status::NotApplicable
                    } else {
                        Status::of(margin.pass && rep.pass)
                    };
                    CheckResult {
                        id,
                        status,
                        report: json!({
                            "constants": w,
                            "min_margin": margin.min_margin,
                            "min_raw_margin": margin.min_raw_margin,
                            "margin_pass": margin.pass,
                            "well": rep,
                            "lambda0": energy.first().map(|r| r.lambda),
                        }),
                    }
                }
            },
            Check::IRates => {
                if !sim.diagnostics || sim.kernel.is_zero() {
                    not_applicable(id, "needs diagnostics and a nonzero kernel")
                } else {
                    match check_i_rates(traj, &energy, &sim.kernel, cfg.proof.delta) {
                        Ok(rep) => CheckResult {
                            id,
                            status: Status::of(rep.pass),
                            report: serde_json::to_value(rep)?,
                        },
                        Err(err) => failure(id, &err),
                    }
                }
            }
            Check::JIdentity => match cfg.xi_spec {
                Some(xi) if sim.diagnostics && sim.record_every == 1 => {
                    let horizon = t.last().copied().unwrap_or(0.0);
                    let tau = cfg.proof.t1.min(0.5 * horizon);
                    match j_decomposition(traj, &energy, &xi, tau, horizon) {
                        Ok(rep) => CheckResult {
                            id,
                            status: Status::of(rep.residual.abs() <= J_TOL * rep.lhs.abs()),
                            report: serde_json::to_value(rep)?,
                        },
                        Err(err) => failure(id, &err),
                    }
                }
                _ => not_applicable(id, "needs xi, diagnostics and output.record_every = 1"),
            },
            Check::Thm32 => {
                let v = check_thm_3_2(&t, &e, gate);
                bounds.push((id, v.bound.clone()));
                verdict_result(id, &v)
            }
            Check::Thm31 => match &cfg.xi_spec {
                None => not_applicable(id, "needs xi"),
                Some(xi) => {
                    let formula = proof.map(|p| if xi.q == 1.0 { p.k } else { p.k_prime });
                    let v = check_thm_3_1(&t, &e, &sim.kernel, xi, gate, formula);
                    bounds.push((id, v.bound.clone()));
                    verdict_result(id, &v)
                }
            },
            Check::GeneralDecay => match &cfg.g_spec {
                None => not_applicable(id, "needs g_fn"),
                Some(g) => match check_thm_general_decay(&t, &e, &sim.kernel, g, cfg.t1_fraction) {
                    Ok(v) => {
                        bounds.push((id, v.bound.clone()));
                        verdict_result(id, &v)
                    }
                    Err(err) => failure(id, &err),
                },
            },
            Check::Example => match sim.kernel.family {
                KernelFamily::Stretched { p, .. } => {
                    let t_from = t[0] + cfg.t1_fraction * (t[t.len() - 1] - t[0]);
                    let rep = check_example_stretched(&t, &e, p, t_from);
                    bounds.push((
                        id,
                        t.iter()
                            .map(|s| {
                                if *s >= t_from {
                                    rep.k * (-rep.k * s.powf(p)).exp()
                                } else {
                                    f64::NAN
                                }
                            })
                            .collect(),
                    ));
                    CheckResult {
                        id,
                        status: Status::of(rep.pass),
                        report: serde_json::to_value(rep)?,
                    }
                }
                _ => not_applicable(id, "needs a stretched kernel"),
            },
            Check::Komornik => {
                let (phi, dphi): (Vec<f64>, Vec<f64>) = match &cfg.xi_spec {
                    Some(xi) => t.iter().map(|s| (xi.integral(*s), xi.xi.value(*s))).unzip(),
                    None => t.iter().map(|s| (*s, 1.0)).unzip(),
                };
                let sigma = cfg
                    .komornik_sigma
                    .unwrap_or(cfg.xi_spec.map_or(0.0, |x| x.q - 1.0));
                let model = if sigma == 0.0 {
                    TailModel::Exponential
                } else {
                    TailModel::Algebraic
                };
                match check_komornik(&t, &e, &phi, &dphi, sigma, None, model) {
                    Ok(rep) => {
                        let mut curve = rep.conclusion_bound.clone();
                        curve.resize(t.len(), f64::NAN);
                        bounds.push((id, curve));
                        CheckResult {
                            id,
                            status: if rep.hypothesis_holds {
                                Status::of(rep.conclusion_holds)
                            } else {
                                Status::NotApplicable
                            },
                            report: serde_json::to_value(rep)?,
                        }
                    }
                    Err(err) => failure(id, &err),
                }
            }
        };
        checks.push(result);
    }

    let mut models = vec![DecayModel::Exponential, DecayModel::Algebraic];
    if let KernelFamily::Stretched { p, .. } = sim.kernel.family {
        models.push(DecayModel::Stretched { p });
    }
    if let Some(g) = cfg.g_spec {
        models.push(DecayModel::GeneralG1 { g });
    }
    let fits = models
        .iter()
        .filter_map(|m| fit_tail(&t, &e, m).ok())
        .collect();

    Ok(Analysis {
        energy,
        diagnostics,
        ell,
        embedding,
        well,
        proof,
        checks,
        bounds,
        fits,
    })
}
