//! Artifact writers. Floats use Rust's shortest round-trip formatting so
//! identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::analysis::Analysis;
use super::config::RunConfig;
use crate::error::Result;
use crate::solver::Trajectory;

pub const ENERGY_COLUMNS: [&str; 9] = [
    "t",
    "kinetic",
    "elastic",
    "memory",
    "log_term",
    "modular",
    "energy",
    "aux_energy",
    "lambda",
];

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:e}");
}

pub fn energy_csv(analysis: &Analysis) -> String {
    let mut out = ENERGY_COLUMNS.join(",");
    for (id, _) in &analysis.bounds {
        let _ = write!(out, ",bound_{id}");
    }
    out.push('\n');
    for (i, r) in analysis.energy.iter().enumerate() {
        let row = [
            r.t, r.kinetic, r.elastic, r.memory, r.log_term, r.modular, r.e, r.aux_e, r.lambda,
        ];
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            num(&mut out, *v);
        }
        for (_, b) in &analysis.bounds {
            out.push(',');
            num(&mut out, b.get(i).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Field names and values of a serializable record, in key order.
fn flatten(v: &Value) -> Vec<(String, f64)> {
    match v {
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| (k.clone(), v.as_f64().unwrap_or(f64::NAN)))
            .collect(),
        _ => Vec::new(),
    }
}

/// Raw solver record columns, then `proof_`-prefixed functional columns.
pub fn diagnostics_csv(traj: &Trajectory, analysis: &Analysis) -> Result<String> {
    let mut out = String::new();
    for (i, rec) in traj.records.iter().enumerate() {
        let mut cols = flatten(&serde_json::to_value(rec)?);
        if let Some(d) = analysis.diagnostics.as_ref().and_then(|d| d.get(i)) {
            cols.extend(
                flatten(&serde_json::to_value(d)?)
                    .into_iter()
                    .filter(|(k, _)| k != "t")
                    .map(|(k, v)| (format!("proof_{k}"), v)),
            );
        }
        if i == 0 {
            out.push_str(
                &cols
                    .iter()
                    .map(|(k, _)| k.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        for (k, (_, v)) in cols.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            num(&mut out, *v);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn verdicts_json(analysis: &Analysis) -> Result<Value> {
    let failed: Vec<&str> = analysis
        .checks
        .iter()
        .filter(|c| !matches!(c.status.as_str(), "pass" | "not_applicable"))
        .map(|c| c.id)
        .collect();
    Ok(json!({
        "checks": analysis.checks,
        "fits": analysis.fits,
        "summary": { "all_pass": failed.is_empty(), "failed": failed },
    }))
}

pub fn meta_json(cfg: &RunConfig, traj: &Trajectory, analysis: &Analysis) -> Result<Value> {
    let config: serde_json::Map<String, Value> = cfg
        .raw
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let sim = &cfg.sim;
    Ok(json!({
        "name": cfg.name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": cfg.seed,
        "dimension": sim.grid.dim(),
        "nodes": sim.grid.len(),
        "dt": sim.dt,
        "horizon": sim.horizon,
        "steps": traj.steps,
        "records": traj.records.len(),
        "cfl_limit": sim.cfl_limit()?,
        "kernel": sim.kernel.name(),
        "g0": sim.kernel.g0(),
        "ell": analysis.ell,
        "p1": sim.exponent.p1,
        "p2": sim.exponent.p2,
        "memory": sim.memory_mode,
        "prony": traj.prony,
        "embedding": analysis.embedding,
        "well": analysis.well,
        "proof_constants": analysis.proof,
    }))
}

/// Gnuplot script drawing `E(t)` with the bound curves, and `λ(t)` against `λ₁`.
pub fn plot_script(analysis: &Analysis) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset datafile missing 'NaN'\nset terminal pngcairo size 1000,700\n\
         set xlabel 't'\nset grid\n\nset output 'energy.png'\nset logscale y\nset ylabel 'E(t)'\n\
         plot 'energy.csv' using 1:7 with lines lw 2 title 'E(t)'",
    );
    for (k, (id, _)) in analysis.bounds.iter().enumerate() {
        let col = ENERGY_COLUMNS.len() + k + 1;
        let _ = write!(
            s,
            ", \\\n     '' using 1:{col} with lines dt 2 title 'bound {id}'"
        );
    }
    s.push_str("\n\nset output 'lambda.png'\nunset logscale y\nset ylabel 'lambda(t)'\nplot 'energy.csv' using 1:9 with lines lw 2 title 'lambda(t)'");
    if let Some(l1) = analysis.well.map(|w| w.lambda1).filter(|l| l.is_finite()) {
        let _ = write!(s, ", \\\n     {l1:e} with lines dt 2 title 'lambda_1'");
    }
    s.push('\n');
    s
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    traj: &Trajectory,
    analysis: &Analysis,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("energy.csv"), energy_csv(analysis))?;
    fs::write(
        dir.join("diagnostics.csv"),
        diagnostics_csv(traj, analysis)?,
    )?;
    write_json(&dir.join("verdicts.json"), &verdicts_json(analysis)?)?;
    write_json(&dir.join("meta.json"), &meta_json(cfg, traj, analysis)?)?;
    fs::write(dir.join("plot.gp"), plot_script(analysis))?;
    Ok(())
}
