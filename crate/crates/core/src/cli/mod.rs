//! Command implementations behind the `viscowave` binary.

pub mod analysis;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exponents::{embedding_constants, p_bounds, AscentOptions};
use crate::functionals::{energy_series, residual_elasticity, well_constants};
use crate::kernels::{check_a2, check_a3};
use crate::solver::{prony_fit, run, MemoryMode, Trajectory};
use crate::verify::{fit_tail, series, DecayModel};
pub use analysis::{analyze, Analysis, CheckResult, Status};
pub use config::{Check, RawConfig, RunConfig};

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "VISCOWAVE_OUT";
/// Largest sweep accepted unless `sweep.cap` says otherwise.
pub const DEFAULT_SWEEP_CAP: usize = 256;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const VERDICT: i32 = 3;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation { .. }
        | Error::Parse { .. }
        | Error::Expr(_)
        | Error::InvalidArgument(_)
        | Error::Shape { .. } => exit::VALIDATION,
        _ => exit::RUNTIME,
    }
}

/// `VISCOWAVE_OUT`, or `out` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// Explicit directory, else `output.dir`, else the config name, under the output root.
pub fn resolve_dir(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => output_root().join(cfg.output_dir.as_deref().unwrap_or(&cfg.name)),
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub trajectory: Trajectory,
    pub analysis: Analysis,
}

pub fn run_command(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let trajectory = run(&cfg.sim)?;
    let analysis = analyze(cfg, &trajectory)?;
    output::write_run(dir, cfg, &trajectory, &analysis)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        trajectory,
        analysis,
    })
}

/// Seed of sweep cell `cell`, drawn from its own ChaCha stream.
pub fn cell_seed(root: u64, cell: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(cell as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRow {
    pub cell: usize,
    pub values: Vec<String>,
    pub status: String,
    pub error: Option<String>,
    pub e0: f64,
    pub e_final: f64,
    pub exp_rate: f64,
    pub exp_r2: f64,
    pub alg_exponent: f64,
    pub alg_r2: f64,
    pub checks: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub axes: Vec<String>,
    pub rows: Vec<CellRow>,
    /// Per axis: whether the fitted exponential rates and algebraic
    /// exponents move monotonically along it (single-axis sweeps only).
    pub monotone: Vec<Value>,
    pub errored: usize,
}

fn cartesian(axes: &[(String, Vec<String>)]) -> Vec<Vec<String>> {
    let mut cells = vec![Vec::new()];
    for (_, values) in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    cells
}

fn monotonicity(xs: &[f64]) -> &'static str {
    if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) {
        "undetermined"
    } else if xs.windows(2).all(|w| w[1] > w[0]) {
        "increasing"
    } else if xs.windows(2).all(|w| w[1] < w[0]) {
        "decreasing"
    } else {
        "none"
    }
}

fn run_cell(raw: &RawConfig, seed: u64, dir: &Path) -> Result<Analysis> {
    let mut raw = raw.clone();
    raw.set("seed", &seed.to_string());
    let cfg = RunConfig::from_raw(&raw)?;
    Ok(run_command(&cfg, dir)?.analysis)
}

pub fn sweep_command(raw: &RawConfig, dir: &Path) -> Result<SweepOutcome> {
    let axes = raw.axes();
    let mut base = raw.clone();
    for (k, _) in &axes {
        base.remove(&format!("sweep.{k}"));
    }
    base.remove("sweep.parallel");
    base.remove("sweep.cap");
    let base_cfg = RunConfig::from_raw(&base)?;
    let cap: usize = raw.get("sweep.cap").map_or(Ok(DEFAULT_SWEEP_CAP), |v| {
        v.parse()
            .map_err(|_| Error::validation("sweep.cap", format!("cannot parse `{v}`")))
    })?;
    let parallel: usize =
        raw.get("sweep.parallel")
            .map_or(Ok(rayon::current_num_threads()), |v| {
                v.parse()
                    .map_err(|_| Error::validation("sweep.parallel", format!("cannot parse `{v}`")))
            })?;
    let cells = cartesian(&axes);
    if cells.len() > cap {
        return Err(Error::validation(
            "sweep",
            format!("{} cells exceed the cap {cap}", cells.len()),
        ));
    }
    for (k, values) in &axes {
        if values.is_empty() {
            return Err(Error::validation(format!("sweep.{k}"), "empty axis"));
        }
    }
    fs::create_dir_all(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<Result<Analysis>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, values)| {
                let mut cell = base.clone();
                for ((k, _), v) in axes.iter().zip(values) {
                    cell.set(k, v);
                }
                let cell_dir = if axes.is_empty() {
                    dir.to_path_buf()
                } else {
                    dir.join(format!("cell_{i:03}"))
                };
                let seed = if axes.is_empty() {
                    base_cfg.seed
                } else {
                    cell_seed(base_cfg.seed, i)
                };
                run_cell(&cell, seed, &cell_dir)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(cells.len());
    for (i, (values, res)) in cells.iter().zip(results).enumerate() {
        let mut row = CellRow {
            cell: i,
            values: values.clone(),
            status: "ok".into(),
            error: None,
            e0: f64::NAN,
            e_final: f64::NAN,
            exp_rate: f64::NAN,
            exp_r2: f64::NAN,
            alg_exponent: f64::NAN,
            alg_r2: f64::NAN,
            checks: Vec::new(),
        };
        match res {
            Err(err) => {
                row.status = "error".into();
                row.error = Some(err.to_string());
            }
            Ok(a) => {
                let (t, e) = series(&a.energy);
                row.e0 = e.first().copied().unwrap_or(f64::NAN);
                row.e_final = e.last().copied().unwrap_or(f64::NAN);
                if let Ok(f) = fit_tail(&t, &e, &DecayModel::Exponential) {
                    row.exp_rate = f.rate;
                    row.exp_r2 = f.r2.unwrap_or(f64::NAN);
                }
                if let Ok(f) = fit_tail(&t, &e, &DecayModel::Algebraic) {
                    row.alg_exponent = f.rate;
                    row.alg_r2 = f.r2.unwrap_or(f64::NAN);
                }
                row.checks = a
                    .checks
                    .iter()
                    .map(|c| (c.id.to_string(), c.status.as_str().to_string()))
                    .collect();
            }
        }
        rows.push(row);
    }
    let monotone = if axes.len() == 1 {
        let exp: Vec<f64> = rows.iter().map(|r| r.exp_rate).collect();
        let alg: Vec<f64> = rows.iter().map(|r| r.alg_exponent).collect();
        vec![json!({
            "axis": axes[0].0,
            "exponential_rate": monotonicity(&exp),
            "algebraic_exponent": monotonicity(&alg),
        })]
    } else {
        Vec::new()
    };
    let outcome = SweepOutcome {
        axes: axes.iter().map(|(k, _)| k.clone()).collect(),
        errored: rows.iter().filter(|r| r.error.is_some()).count(),
        rows,
        monotone,
    };
    fs::write(dir.join("sweep.csv"), sweep_csv(&outcome))?;
    output::write_json(&dir.join("sweep.json"), &serde_json::to_value(&outcome)?)?;
    Ok(outcome)
}

pub fn sweep_csv(s: &SweepOutcome) -> String {
    let mut header = vec!["cell".to_string()];
    header.extend(s.axes.iter().cloned());
    header.extend(
        [
            "status",
            "e0",
            "e_final",
            "exp_rate",
            "exp_r2",
            "alg_exponent",
            "alg_r2",
        ]
        .iter()
        .map(|c| c.to_string()),
    );
    header.extend(Check::ALL.iter().map(|c| c.id().to_string()));
    header.push("error".into());
    let mut out = header.join(",");
    out.push('\n');
    for r in &s.rows {
        let mut cols = vec![r.cell.to_string()];
        cols.extend(r.values.iter().cloned());
        cols.push(r.status.clone());
        for v in [
            r.e0,
            r.e_final,
            r.exp_rate,
            r.exp_r2,
            r.alg_exponent,
            r.alg_r2,
        ] {
            cols.push(format!("{v:e}"));
        }
        for c in Check::ALL {
            cols.push(
                r.checks
                    .iter()
                    .find(|(id, _)| id == c.id())
                    .map_or("skipped".to_string(), |(_, s)| s.clone()),
            );
        }
        cols.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntry {
    pub modes: usize,
    pub seconds: f64,
    pub steps_per_sec: f64,
    pub speedup: f64,
    /// `max_t |E_direct - E_fast| / E(0)`
    pub max_rel_discrepancy: f64,
    pub fit_error: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub steps: usize,
    pub nodes: usize,
    pub direct_seconds: f64,
    pub direct_steps_per_sec: f64,
    pub entries: Vec<BenchEntry>,
    pub self_comparison: bool,
}

/// Times the run with direct memory and with each requested Prony size.
/// Diagnostics are switched off so both paths do the same work.
pub fn bench_command(cfg: &RunConfig, dir: Option<&Path>) -> Result<BenchReport> {
    let mut sim = cfg.sim.clone();
    sim.diagnostics = false;
    let mut modes = cfg.bench_modes.clone();
    let mut fit_tol = 1.0;
    if modes.is_empty() {
        if let MemoryMode::Prony { modes: m, tol } = cfg.sim.memory_mode {
            modes.push(m);
            fit_tol = tol;
        }
    }
    sim.memory_mode = MemoryMode::Direct;
    sim.max_history_bytes = usize::MAX;
    let start = Instant::now();
    let direct = run(&sim)?;
    let direct_seconds = start.elapsed().as_secs_f64();
    let ed = energy_series(&direct)?;
    let e0 = ed.first().map_or(1.0, |r| r.e.abs().max(f64::MIN_POSITIVE));
    let steps = direct.steps;
    let mut entries = Vec::new();
    if modes.is_empty() {
        entries.push(BenchEntry {
            modes: 0,
            seconds: direct_seconds,
            steps_per_sec: steps as f64 / direct_seconds,
            speedup: 1.0,
            max_rel_discrepancy: 0.0,
            fit_error: 0.0,
            fit_seconds: 0.0,
        });
    }
    for &m in &modes {
        let fit_start = Instant::now();
        let approx = prony_fit(&sim.kernel, m, sim.horizon, f64::INFINITY)?;
        let fit_seconds = fit_start.elapsed().as_secs_f64();
        let mut fast_sim = sim.clone();
        fast_sim.memory_mode = MemoryMode::Prony {
            modes: m,
            tol: fit_tol.max(approx.max_rel_error),
        };
        let start = Instant::now();
        let fast = run(&fast_sim)?;
        let seconds = start.elapsed().as_secs_f64();
        let ef = energy_series(&fast)?;
        let disc = ed
            .iter()
            .zip(&ef)
            .map(|(a, b)| (a.e - b.e).abs())
            .fold(0.0, f64::max)
            / e0;
        entries.push(BenchEntry {
            modes: m,
            seconds,
            steps_per_sec: steps as f64 / seconds,
            speedup: direct_seconds / seconds,
            max_rel_discrepancy: disc,
            fit_error: approx.max_rel_error,
            fit_seconds,
        });
    }
    let report = BenchReport {
        steps,
        nodes: sim.grid.len(),
        direct_seconds,
        direct_steps_per_sec: steps as f64 / direct_seconds,
        self_comparison: modes.is_empty(),
        entries,
    };
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        output::write_json(&dir.join("bench.json"), &serde_json::to_value(&report)?)?;
    }
    Ok(report)
}

/// Kernel analytics: (A1), `I(t)`, `M(δ)` along `δ = 2^{-k}`, the optional
/// (A2)/(A3) checks and the Prony fit when configured.
pub fn kernel_check(cfg: &RunConfig) -> Result<Value> {
    let k = &cfg.sim.kernel;
    let horizon = cfg.sim.horizon;
    let mut out = json!({ "family": k.name(), "g0": k.g0() });
    if k.is_zero() {
        return Ok(out);
    }
    let a1 = k.check_a1()?;
    let samples: Vec<f64> = (0..=10).map(|i| horizon * i as f64 / 10.0).collect();
    let tail = samples
        .iter()
        .map(|&t| k.tail_integral(t).map(|v| json!([t, v])))
        .collect::<Result<Vec<_>>>()?;
    let m_delta = (1..=12)
        .map(|j| {
            let d = 0.5f64.powi(j);
            k.m_delta(d)
                .map(|m| json!({ "delta": d, "m": m, "delta_m": d * m }))
        })
        .collect::<Result<Vec<_>>>()?;
    out["a1"] = serde_json::to_value(a1)?;
    out["tail_integral"] = Value::Array(tail);
    out["m_delta"] = Value::Array(m_delta);
    let grid: Vec<f64> = (1..=400).map(|i| horizon * i as f64 / 400.0).collect();
    if let Some(g) = &cfg.g_spec {
        let rep = check_a2(k, g, &grid);
        out["a2"] = json!({ "ok": rep.ok, "max_residual": rep.max_residual, "violations": rep.violations.len() });
    }
    if let Some(xi) = &cfg.xi_spec {
        let rep = check_a3(k, xi, &grid);
        out["a3"] = json!({ "ok": rep.ok, "max_residual": rep.max_residual, "violations": rep.violations.len() });
    }
    if let MemoryMode::Prony { modes, tol } = cfg.sim.memory_mode {
        out["prony"] = serde_json::to_value(prony_fit(k, modes, horizon, tol)?)?;
    }
    Ok(out)
}

/// Exponent admissibility, embedding constants and the potential-well levels.
pub fn embed_command(cfg: &RunConfig) -> Result<Value> {
    let sim = &cfg.sim;
    let bounds = p_bounds(&sim.exponent, sim.grid.dim(), sim.dimension_policy)?;
    let opts = AscentOptions {
        restarts: cfg.embed_restarts,
        max_iter: cfg.embed_max_iter,
        seed: cfg.seed,
    };
    let consts = embedding_constants(&sim.grid, &sim.exponent, cfg.mu, &opts)?;
    let ell = residual_elasticity(&sim.kernel)?;
    let well = well_constants(
        ell,
        sim.exponent.p1,
        sim.exponent.p2,
        consts.mu,
        consts.b_p2_mu,
        sim.alpha,
        0.0,
    )?;
    Ok(json!({
        "p_bounds": bounds,
        "log_holder_modulus": sim.exponent.holder_a,
        "embedding": consts,
        "ell": ell,
        "lambda1": well.lambda1,
        "e1": well.e1,
        "seed": cfg.seed,
    }))
}
