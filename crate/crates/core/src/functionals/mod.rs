//! Energy, its dissipation identity, potential-well quantities and the
//! auxiliary functionals used in the decay proofs.

mod proof;
mod well;

pub use proof::{
    check_i_rates, j_decomposition, proof_constants, proof_functionals, search_multipliers,
    ConstantInputs, DiagnosticsRecord, IRateReport, JDecomposition, Multipliers, ProofConstants,
    ProofParams,
};
pub use well::{
    check_lemma_2_6, check_lemma_2_7_and_2_8, well_constants, MarginReport, WellConstants,
    WellReport,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::ExponentField;
use crate::grid::Grid;
use crate::kernels::KernelSpec;
use crate::solver::{RawRecord, Trajectory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    /// `½ (g∘∇u)(t)`
    pub memory: f64,
    /// `α ∫ |u|^p log|u| / p`
    pub log_term: f64,
    /// `α ∫ |u|^p / p²`
    pub modular: f64,
    pub e: f64,
    /// `E + α ∫ |u|^p log|u| / p`
    pub aux_e: f64,
    pub lambda: f64,
}

impl EnergyRecord {
    fn assemble(
        t: f64,
        kinetic: f64,
        elastic: f64,
        memory: f64,
        log_term: f64,
        modular: f64,
        lambda: f64,
    ) -> Self {
        let e = kinetic + elastic + memory - log_term + modular;
        EnergyRecord {
            t,
            kinetic,
            elastic,
            memory,
            log_term,
            modular,
            e,
            aux_e: e + log_term,
            lambda,
        }
    }
}

/// `ℓ` of the kernel; `1` for the zero kernel.
pub fn residual_elasticity(kernel: &KernelSpec) -> Result<f64> {
    if kernel.is_zero() {
        return Ok(1.0);
    }
    Ok(kernel.check_a1()?.ell)
}

/// Energy of one solver record. The kinetic part is the discrete
/// (time-averaged) kinetic energy of the scheme.
pub fn energy_of(rec: &RawRecord, alpha: f64, ell: f64) -> EnergyRecord {
    let lam2 = ell * rec.grad_sq + rec.mem;
    EnergyRecord::assemble(
        rec.t,
        rec.kin,
        0.5 * (1.0 - rec.g_int) * rec.grad_sq,
        0.5 * rec.mem,
        alpha * rec.log_term,
        alpha * rec.mod_term,
        lam2.max(0.0).sqrt(),
    )
}

pub fn energy_series(traj: &Trajectory) -> Result<Vec<EnergyRecord>> {
    let ell = residual_elasticity(&traj.config.kernel)?;
    Ok(traj
        .records
        .iter()
        .map(|r| energy_of(r, traj.config.alpha, ell))
        .collect())
}

/// Reference energy at `t = (len - 1) dt` from an explicit history of `u`,
/// with `∫_0^t g` by adaptive quadrature and `(g∘∇u)` by the trapezoid rule.
#[allow(clippy::too_many_arguments)]
pub fn energy(
    grid: &Grid,
    history: &[Vec<f64>],
    ut: &[f64],
    dt: f64,
    kernel: &KernelSpec,
    exponent: &ExponentField,
    alpha: f64,
) -> Result<EnergyRecord> {
    let Some(u) = history.last() else {
        return Err(Error::MissingHistory(
            "energy needs the current state".into(),
        ));
    };
    grid.check_len(u)?;
    grid.check_len(ut)?;
    let n = history.len() - 1;
    let t = n as f64 * dt;
    let ell = residual_elasticity(kernel)?;
    let grad_sq = grid.grad_norm_sq(u);
    let g_int = if kernel.is_zero() {
        0.0
    } else {
        kernel.integral_to(t)?
    };
    let mut mem = 0.0;
    if n > 0 && !kernel.is_zero() {
        let mut diff = vec![0.0; u.len()];
        for (j, us) in history.iter().enumerate() {
            grid.check_len(us)?;
            diff.iter_mut()
                .zip(u.iter().zip(us))
                .for_each(|(d, (a, b))| *d = a - b);
            let c = if j == 0 || j == n { 0.5 * dt } else { dt };
            mem += c * kernel.value((n - j) as f64 * dt) * grid.grad_norm_sq(&diff);
        }
    }
    let (mut lt, mut md) = (0.0, 0.0);
    for ((v, p), w) in u.iter().zip(exponent.values()).zip(grid.weights()) {
        let a = v.abs();
        if a >= 1e-300 {
            let ap = a.powf(*p);
            lt += w * ap * a.ln() / p;
            md += w * ap / (p * p);
        }
    }
    Ok(EnergyRecord::assemble(
        t,
        0.5 * grid.norm_sq(ut),
        0.5 * (1.0 - g_int) * grad_sq,
        0.5 * mem,
        alpha * lt,
        alpha * md,
        (ell * grad_sq + mem).max(0.0).sqrt(),
    ))
}

/// Residual of `E' = ½(g'∘∇u) - ½ g(t) ‖∇u‖² - ‖u_t‖²` with `E'` by
/// central differences over records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCheck {
    pub t: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_abs: f64,
}

pub fn energy_rate_check(traj: &Trajectory) -> Result<RateCheck> {
    let recs = &traj.records;
    if recs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate check needs at least 3 records, got {}",
            recs.len()
        )));
    }
    let energy = energy_series(traj)?;
    let mut t = Vec::with_capacity(recs.len() - 2);
    let mut residual = Vec::with_capacity(recs.len() - 2);
    for k in 1..recs.len() - 1 {
        let r = &recs[k];
        if r.mem_dg.is_nan() {
            return Err(Error::MissingHistory(
                "rate check needs a run with diagnostics".into(),
            ));
        }
        let de = (energy[k + 1].e - energy[k - 1].e) / (recs[k + 1].t - recs[k - 1].t);
        let rhs = 0.5 * r.mem_dg - 0.5 * r.g_t * r.grad_sq - r.ut_sq;
        t.push(r.t);
        residual.push(de - rhs);
    }
    let max_abs = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(RateCheck {
        t,
        residual,
        max_abs,
    })
}

/// Largest step-to-step increase of `E`, relative to `E(0)`.
pub fn max_energy_increase(energy: &[EnergyRecord]) -> f64 {
    let e0 = energy.first().map_or(0.0, |r| r.e);
    let worst = energy
        .windows(2)
        .map(|w| w[1].e - w[0].e)
        .fold(f64::NEG_INFINITY, f64::max);
    if e0 > 0.0 {
        worst / e0
    } else {
        worst
    }
}
