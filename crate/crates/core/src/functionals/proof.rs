use std::f64::consts::E;

use serde::Serialize;

use super::EnergyRecord;
use crate::error::{Error, Result};
use crate::kernels::{GSpec, KernelSpec, XiSpec};
use crate::quad;
use crate::solver::Trajectory;

/// Free parameters of the Lyapunov construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofParams {
    pub delta: f64,
    pub eps: f64,
    /// Scale inside `Ḡ'(ε₁ E/E(0))`; defaults to `r/2` of the `G` in use.
    pub eps1: Option<f64>,
    /// Constant `C` in `F₁ = ζF + C E`.
    pub f1_const: f64,
    /// Time fixing `g₁ = ∫_0^{t₁} g`.
    pub t1: f64,
}

impl Default for ProofParams {
    fn default() -> Self {
        ProofParams {
            delta: 0.25,
            eps: 1.0,
            eps1: None,
            f1_const: 1.0,
            t1: 1.0,
        }
    }
}

impl ProofParams {
    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "δ must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ε must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multipliers {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    /// Value used for the unspecified constant `c(δ)`.
    pub c_delta: f64,
    pub found: bool,
}

/// Default for the generic constant `c(δ)`: the sum of the explicit
/// Young and Poincaré factors that enter its derivation.
pub fn default_c_delta(delta: f64, b2: f64, p1: f64, mu: f64) -> f64 {
    1.0 + 1.0 / (4.0 * delta)
        + b2 * delta
        + b2 * (1.0 / (E * (p1 - 2.0)) + 1.0 / (E * mu)) / (4.0 * delta)
}

/// Smallest `N₁` on a dyadic grid (then smallest `N₂`) with
/// `N₃ > 0` and `N₁/2 - g(0) B₂ N₂ / (4δ) > 0`.
pub fn search_multipliers(
    ell: f64,
    g0: f64,
    g1: f64,
    b2: f64,
    p1: f64,
    mu: f64,
    delta: f64,
) -> Multipliers {
    let c_delta = default_c_delta(delta, b2, p1, mu);
    let grid: Vec<f64> = (0..30).map(|k| 0.25 * 2f64.powi(k)).collect();
    for &n1 in &grid {
        for &n2 in grid.iter().take(9) {
            let n3 = n1 - 1.0 - b2 / ell - n2 * (1.0 / (4.0 * delta) + delta - g1);
            let second = 0.5 * n1 - g0 * b2 * n2 / (4.0 * delta);
            if n3 > 0.0 && second > 0.0 {
                return Multipliers {
                    n1,
                    n2,
                    n3,
                    n4: 1.0 / ell + c_delta * n2,
                    c_delta,
                    found: true,
                };
            }
        }
    }
    Multipliers {
        n1: f64::NAN,
        n2: f64::NAN,
        n3: f64::NAN,
        n4: f64::NAN,
        c_delta,
        found: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantInputs {
    pub ell: f64,
    pub g0: f64,
    /// `∫_0^{t₁} g`
    pub g1: f64,
    pub p1: f64,
    pub p2: f64,
    pub mu: f64,
    pub b2: f64,
    pub b_p2_mu: f64,
    pub b_2p2_mu: f64,
    pub b_px: f64,
    pub e0: f64,
    pub ctilde: f64,
    pub xi0: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofConstants {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi4: f64,
    pub k: f64,
    /// Uses `C(ε) = 1/ε` for the unspecified constant.
    pub k_prime: f64,
    pub alpha_bound: f64,
    pub multipliers: Multipliers,
}

pub fn proof_constants(inp: &ConstantInputs, params: &ProofParams) -> Result<ProofConstants> {
    params.check()?;
    if !inp.ctilde.is_finite() {
        return Err(Error::InvalidArgument(
            "C̃ is inapplicable (its denominator is not positive)".into(),
        ));
    }
    let ConstantInputs {
        ell,
        p1,
        p2,
        mu,
        b2,
        e0,
        ctilde,
        xi0,
        q,
        ..
    } = *inp;
    let x = 2.0 * (1.0 + ctilde) * e0 / ell;
    let xi1 = b2 / (E * (p1 - 2.0)) + inp.b_2p2_mu / (E * mu) * x.powf(p2 - 2.0 + mu);
    let xi2 = inp.b_p2_mu / (E * mu) * x.powf(0.5 * (p2 + mu - 2.0));
    let xi3 = (inp.b_px.powf(p1) * x.powf(0.5 * (p1 - 2.0)))
        .max(inp.b_px.powf(p2) * x.powf(0.5 * (p2 - 2.0)));
    let xi4 = (p2 - 2.0) * inp.b_p2_mu / (E * mu * p2)
        * (2.0 * (1.0 + ctilde) / ell).powf(0.5 * (p2 + mu))
        * e0.powf(0.5 * (p2 + mu - 2.0));
    let alpha_bound = 1.0 / (xi4 + 4.0 * (1.0 + ctilde) * xi3 / (p1 * p1 * ell));
    let (eps, delta) = (params.eps, params.delta);
    let spread = 1.0 + b2 / ell;
    let k =
        1.0 / (2.0 + 1.0 / eps + (2.0 + 4.0 * (1.0 + ctilde) * spread + 1.0 / (4.0 * delta)) * xi0);
    let k_prime = 1.0
        / (1.0 / eps
            + xi0
                * e0.powf(q - 1.0)
                * (2.0 / q + 1.0 / (4.0 * delta * q) + 4.0 * (1.0 + ctilde) * spread));
    let multipliers = search_multipliers(ell, inp.g0, inp.g1, b2, p1, mu, delta);
    Ok(ProofConstants {
        xi1,
        xi2,
        xi3,
        xi4,
        k,
        k_prime,
        alpha_bound,
        multipliers,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub l: f64,
    pub j: f64,
    /// `F`, `F₁`, `F₂`; NaN when no `G` is supplied.
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
}

fn require_diagnostics(traj: &Trajectory) -> Result<()> {
    if traj.records.iter().any(|r| r.i1.is_nan()) {
        return Err(Error::MissingHistory(
            "proof functionals need a run with diagnostics".into(),
        ));
    }
    Ok(())
}

pub fn proof_functionals(
    traj: &Trajectory,
    energy: &[EnergyRecord],
    kernel: &KernelSpec,
    ell: f64,
    params: &ProofParams,
    mult: &Multipliers,
    g_spec: Option<&GSpec>,
) -> Result<Vec<DiagnosticsRecord>> {
    params.check()?;
    require_diagnostics(traj)?;
    let m = kernel.m_delta(params.delta)?;
    let e0 = energy.first().map_or(0.0, |r| r.e);
    let ext = g_spec.map(|g| g.extend()).transpose()?;
    let eps1 = params.eps1.or(g_spec.map(|g| 0.5 * g.r));
    let mut out: Vec<DiagnosticsRecord> = traj
        .records
        .iter()
        .zip(energy)
        .map(|(r, en)| {
            let i2 = m * (params.delta * r.i1 + en.e);
            let l = mult.n1 * en.e + r.ut_u + mult.n2 * r.i4;
            let f = match (&ext, eps1) {
                (Some(g), Some(e1)) if e0 > 0.0 => g.d1(e1 * en.e / e0) * l,
                (Some(_), Some(_)) => 0.0,
                _ => f64::NAN,
            };
            let zeta = g_spec.map_or(f64::NAN, |g| g.zeta.value(r.t));
            DiagnosticsRecord {
                t: r.t,
                i1: r.i1,
                i2,
                i3: r.ut_u,
                i4: r.i4,
                l,
                j: l + ell / 32.0 * r.i1 + 2.0 * mult.n4 * i2,
                f,
                f1: zeta * f + params.f1_const * en.e,
                f2: f64::NAN,
            }
        })
        .collect();
    // β₁ = min E/F₁ over records with F₁ > 0
    let beta1 = out
        .iter()
        .zip(energy)
        .filter(|(d, _)| d.f1 > 0.0)
        .map(|(d, en)| en.e / d.f1)
        .fold(f64::INFINITY, f64::min);
    for d in &mut out {
        d.f2 = if beta1.is_finite() && e0 > 0.0 {
            beta1 * d.f1 / e0
        } else if d.f1.is_nan() {
            f64::NAN
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Check of the two differential inequalities for `I₁` and `I₂`, with the
/// derivatives by central differences and slack `1e-2·E(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IRateReport {
    /// `max_t (I₁' - (-(g∘∇u)/2 + 2‖∇u‖²))`
    pub i1_excess: f64,
    /// `max_t (I₂' - (-(M/2)((-g'∘∇u) + δ(g∘∇u)) + 2δM‖∇u‖²))`
    pub i2_excess: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn check_i_rates(
    traj: &Trajectory,
    energy: &[EnergyRecord],
    kernel: &KernelSpec,
    delta: f64,
) -> Result<IRateReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "δ must lie in (0, 1), got {delta}"
        )));
    }
    require_diagnostics(traj)?;
    let recs = &traj.records;
    if recs.len() < 3 {
        return Err(Error::InvalidArgument(
            "I-rate check needs at least 3 records".into(),
        ));
    }
    let m = kernel.m_delta(delta)?;
    let i2 = |k: usize| m * (delta * recs[k].i1 + energy[k].e);
    let (mut i1_excess, mut i2_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 1..recs.len() - 1 {
        let r = &recs[k];
        let h = recs[k + 1].t - recs[k - 1].t;
        let di1 = (recs[k + 1].i1 - recs[k - 1].i1) / h;
        let di2 = (i2(k + 1) - i2(k - 1)) / h;
        let kg = -r.mem_dg + delta * r.mem;
        i1_excess = i1_excess.max(di1 - (-0.5 * r.mem + 2.0 * r.grad_sq));
        i2_excess = i2_excess.max(di2 - (-0.5 * m * kg + 2.0 * delta * m * r.grad_sq));
    }
    let slack = 1e-2 * energy[0].e;
    Ok(IRateReport {
        i1_excess,
        i2_excess,
        slack,
        pass: i1_excess <= slack && i2_excess <= slack,
    })
}

/// Terms of `2∫_τ^T ξE^q = Σ Jᵢ` evaluated with the trapezoid rule on
/// records. `J₃` is split by discrete summation by parts so that the sum
/// matches the left side to rounding; the continuous form of `J₃` with
/// `E'` by central differences is reported alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JDecomposition {
    pub tau: f64,
    pub t_end: f64,
    pub lhs: f64,
    pub j: [f64; 7],
    /// `J₃¹, J₃², J₃³`
    pub j3_parts: [f64; 3],
    /// `∫ ξE^{q-1} (f, u)`; zero without forcing.
    pub forcing: f64,
    pub residual: f64,
    pub rel_residual: f64,
    pub j3_continuous: f64,
    pub continuous_residual: f64,
}

pub fn j_decomposition(
    traj: &Trajectory,
    energy: &[EnergyRecord],
    xi: &XiSpec,
    tau: f64,
    t_end: f64,
) -> Result<JDecomposition> {
    if traj.config.record_every != 1 {
        return Err(Error::InvalidArgument(
            "the J decomposition needs record_every = 1".into(),
        ));
    }
    if !(tau < t_end) {
        return Err(Error::InvalidArgument(format!(
            "need τ < T, got τ = {tau}, T = {t_end}"
        )));
    }
    let alpha = traj.config.alpha;
    let q = xi.q;
    let idx: Vec<usize> = (0..traj.records.len())
        .filter(|&k| traj.records[k].t >= tau - 1e-12 && traj.records[k].t <= t_end + 1e-12)
        .collect();
    if idx.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {} records in [τ, T]",
            idx.len()
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&k| traj.records[k].t).collect();
    let epow = |e: f64| {
        if q == 1.0 {
            1.0
        } else {
            e.max(0.0).powf(q - 1.0)
        }
    };
    let xi_v: Vec<f64> = t.iter().map(|&s| xi.xi.value(s)).collect();
    let ep: Vec<f64> = idx.iter().map(|&k| epow(energy[k].e)).collect();
    let psi: Vec<f64> = xi_v.iter().zip(&ep).map(|(a, b)| a * b).collect();
    let integ = |f: &dyn Fn(usize) -> f64| {
        let y: Vec<f64> = (0..idx.len()).map(|i| psi[i] * f(idx[i])).collect();
        quad::trapezoid(&t, &y)
    };
    let recs = &traj.records;
    let lhs = 2.0 * integ(&|k| energy[k].e);
    let j1 = integ(&|k| 2.0 * (recs[k].kin + recs[k].kin_half));
    let j2 = integ(&|k| -recs[k].ut_u);
    let j4 = integ(&|k| recs[k].mem);
    let j5 = integ(&|k| recs[k].j5);
    let j6 = alpha * integ(&|k| recs[k].plog - 2.0 * recs[k].log_term);
    let j7 = 2.0 * alpha * integ(&|k| recs[k].mod_term);
    let forcing = integ(&|k| recs[k].forcing_u);

    let last = idx.len() - 1;
    let i3 = |i: usize| recs[idx[i]].i3;
    let j31 = -(psi[last] * i3(last) - psi[0] * i3(0));
    let (mut j32, mut j33) = (0.0, 0.0);
    for i in 0..last {
        let h = recs[idx[i]].h_plus;
        j32 += 0.5 * (xi_v[i + 1] + xi_v[i]) * (ep[i + 1] - ep[i]) * h;
        j33 += 0.5 * (ep[i + 1] + ep[i]) * (xi_v[i + 1] - xi_v[i]) * h;
    }
    let j3 = j31 + j32 + j33;
    let sum = j1 + j2 + j3 + j4 + j5 + j6 + j7 + forcing;
    let residual = (lhs - sum).abs();

    // continuous form: J₃ = -[ψ I₃] + ∫ (ξ' E^{q-1} + (q-1) ξ E^{q-2} E') I₃
    let dpsi: Vec<f64> = (0..idx.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(last));
            let de = (energy[idx[b]].e - energy[idx[a]].e) / (t[b] - t[a]);
            let h = 1e-6 * (1.0 + t[i]);
            let dxi = (xi.xi.value(t[i] + h) - xi.xi.value((t[i] - h).max(0.0)))
                / (t[i] + h - (t[i] - h).max(0.0));
            let e = energy[idx[i]].e;
            let de_term = if q == 1.0 || e <= 0.0 {
                0.0
            } else {
                (q - 1.0) * xi_v[i] * e.powf(q - 2.0) * de
            };
            dxi * ep[i] + de_term
        })
        .collect();
    let y: Vec<f64> = (0..idx.len()).map(|i| dpsi[i] * i3(i)).collect();
    let j3_continuous = j31 + quad::trapezoid(&t, &y);
    let continuous_residual = (lhs - (sum - j3 + j3_continuous)).abs();
    Ok(JDecomposition {
        tau: t[0],
        t_end: t[last],
        lhs,
        j: [j1, j2, j3, j4, j5, j6, j7],
        j3_parts: [j31, j32, j33],
        forcing,
        residual,
        rel_residual: if lhs != 0.0 {
            residual / lhs.abs()
        } else {
            residual
        },
        j3_continuous,
        continuous_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> ConstantInputs {
        ConstantInputs {
            ell: 0.5,
            g0: 0.5,
            g1: 0.3,
            p1: 3.0,
            p2: 3.0,
            mu: 1.0,
            b2: 0.5,
            b_p2_mu: 0.1,
            b_2p2_mu: 0.1,
            b_px: 0.3,
            e0: 0.0,
            ctilde: 0.0,
            xi0: 1.0,
            q: 1.0,
        }
    }

    #[test]
    fn k_example() {
        let c = proof_constants(&inputs(), &ProofParams::default()).unwrap();
        assert!((c.k - 1.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn xi1_at_zero_energy() {
        let mut inp = inputs();
        inp.b2 = E;
        let c = proof_constants(&inp, &ProofParams::default()).unwrap();
        assert!((c.xi1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_bound_decreases_with_energy() {
        let mut prev = f64::INFINITY;
        for e0 in [0.01, 0.1, 1.0, 10.0] {
            let mut inp = inputs();
            inp.e0 = e0;
            let c = proof_constants(&inp, &ProofParams::default()).unwrap();
            assert!(c.alpha_bound < prev);
            prev = c.alpha_bound;
        }
    }

    #[test]
    fn multiplier_search_meets_constraints() {
        let m = search_multipliers(0.5, 0.5, 0.3, 0.1, 3.0, 1.0, 0.25);
        assert!(m.found && m.n3 > 0.0);
        assert!(0.5 * m.n1 - 0.5 * 0.1 * m.n2 / (4.0 * 0.25) > 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        let p = ProofParams {
            delta: 1.5,
            ..Default::default()
        };
        assert!(proof_constants(&inputs(), &p).is_err());
        let mut inp = inputs();
        inp.ctilde = f64::INFINITY;
        assert!(proof_constants(&inp, &ProofParams::default()).is_err());
    }
}
