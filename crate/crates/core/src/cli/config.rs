//! Flat `key = value` configuration with dotted keys and `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exponents::{DimensionPolicy, ExponentField};
use crate::expr::Expr;
use crate::functionals::ProofParams;
use crate::grid::Grid;
use crate::kernels::{Envelope, GFamily, GSpec, KernelSpec, Rate, XiSpec};
use crate::solver::{FieldSource, MemoryMode, SimConfig};

/// Keys accepted in a config file, besides `sweep.<key>` axes.
pub const KEYS: &[&str] = &[
    "name",
    "seed",
    "strict",
    "verify",
    "alpha",
    "diagnostics",
    "forcing",
    "grid.dim",
    "grid.cells",
    "grid.nx",
    "grid.ny",
    "grid.length",
    "grid.lx",
    "grid.ly",
    "kernel.family",
    "kernel.a",
    "kernel.b",
    "kernel.r",
    "kernel.p",
    "kernel.t",
    "kernel.g",
    "kernel.envelope",
    "exponent.p",
    "exponent.expr",
    "exponent.policy",
    "exponent.mu",
    "time.dt",
    "time.horizon",
    "memory.mode",
    "memory.modes",
    "memory.tol",
    "init.u0",
    "init.u1",
    "output.dir",
    "output.record_every",
    "g_fn.family",
    "g_fn.k",
    "g_fn.c",
    "g_fn.m",
    "g_fn.a",
    "g_fn.p",
    "g_fn.r",
    "zeta.c",
    "zeta.k",
    "xi.c",
    "xi.k",
    "xi.q",
    "decay.t1_fraction",
    "komornik.sigma",
    "proof.delta",
    "proof.eps",
    "proof.t1",
    "embed.restarts",
    "embed.max_iter",
    "bench.modes",
    "sweep.parallel",
    "sweep.cap",
];

/// Parsed `key = value` pairs with their source lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("bad key `{key}`"),
                });
            }
            let value = unquote(value.trim());
            if entries.insert(key.to_string(), (value, lineno)).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        let raw = RawConfig { entries };
        raw.check_keys()?;
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn check_keys(&self) -> Result<()> {
        for key in self.entries.keys() {
            let base = key
                .strip_prefix("sweep.")
                .filter(|k| !matches!(*k, "parallel" | "cap"));
            let known = KEYS.contains(&key.as_str()) || base.is_some_and(|b| KEYS.contains(&b));
            if !known {
                return Err(Error::validation(key.clone(), "unknown key"));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .map(|(k, (v, _))| (k.as_str(), v.as_str()))
    }

    /// Sweep axes in key order: `sweep.alpha = 0.001, 0.01` -> (`alpha`, values).
    pub fn axes(&self) -> Vec<(String, Vec<String>)> {
        self.iter()
            .filter_map(|(k, v)| {
                let base = k.strip_prefix("sweep.")?;
                if matches!(base, "parallel" | "cap") {
                    return None;
                }
                Some((base.to_string(), split_list(v)))
            })
            .collect()
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::validation(key, format!("cannot parse `{v}`"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn need<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::validation(key, "required"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)
            .map(split_list)
            .unwrap_or_default()
            .iter()
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::validation(key, format!("cannot parse `{v}`")))
            })
            .collect()
    }

    fn expr(&self, key: &str) -> Result<Option<Expr>> {
        self.get(key)
            .map(|s| Expr::parse(s).map_err(|e| Error::validation(key, e.to_string())))
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> String {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
        .to_string()
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Checks a run can carry out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Energy,
    Wells,
    IRates,
    JIdentity,
    Thm32,
    Thm31,
    GeneralDecay,
    Example,
    Komornik,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Energy,
        Check::Wells,
        Check::IRates,
        Check::JIdentity,
        Check::Thm32,
        Check::Thm31,
        Check::GeneralDecay,
        Check::Example,
        Check::Komornik,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Check::Energy => "energy",
            Check::Wells => "wells",
            Check::IRates => "i_rates",
            Check::JIdentity => "j_identity",
            Check::Thm32 => "thm_3_2",
            Check::Thm31 => "thm_3_1",
            Check::GeneralDecay => "thm_general_decay",
            Check::Example => "example",
            Check::Komornik => "komornik",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::validation("verify", format!("unknown check `{s}`")))
    }
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub name: String,
    pub sim: SimConfig,
    pub verify: Vec<Check>,
    pub output_dir: Option<String>,
    pub seed: u64,
    pub strict: bool,
    pub g_spec: Option<GSpec>,
    pub xi_spec: Option<XiSpec>,
    pub t1_fraction: f64,
    pub komornik_sigma: Option<f64>,
    pub proof: ProofParams,
    pub mu: Option<f64>,
    pub embed_restarts: usize,
    pub embed_max_iter: usize,
    pub bench_modes: Vec<usize>,
    pub raw: RawConfig,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let grid = grid(raw)?;
        let kernel = kernel(raw)?;
        let exponent = match (raw.get("exponent.p"), raw.expr("exponent.expr")?) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "exponent",
                    "give exponent.p or exponent.expr, not both",
                ))
            }
            (_, Some(e)) => ExponentField::from_expr(&grid, &e)?,
            _ => ExponentField::constant(&grid, raw.or("exponent.p", 3.0)?)?,
        };
        let mut sim = SimConfig::new(
            grid,
            kernel,
            exponent,
            raw.or("alpha", 0.0)?,
            raw.need("time.dt")?,
            raw.need("time.horizon")?,
        );
        sim.dimension_policy = match raw.get("exponent.policy").unwrap_or("relaxed") {
            "relaxed" => DimensionPolicy::Relaxed,
            "strict" => DimensionPolicy::Strict,
            other => {
                return Err(Error::validation(
                    "exponent.policy",
                    format!("expected relaxed or strict, got `{other}`"),
                ))
            }
        };
        match raw.get("memory.mode") {
            None => {}
            Some("direct") => sim.memory_mode = MemoryMode::Direct,
            Some("prony") => {
                sim.memory_mode = MemoryMode::Prony {
                    modes: raw.or("memory.modes", 8)?,
                    tol: raw.or("memory.tol", 1e-6)?,
                }
            }
            Some(other) => {
                return Err(Error::validation(
                    "memory.mode",
                    format!("expected direct or prony, got `{other}`"),
                ))
            }
        }
        if let Some(e) = raw.expr("init.u0")? {
            sim.u0 = FieldSource::Expr(e);
        }
        if let Some(e) = raw.expr("init.u1")? {
            sim.u1 = FieldSource::Expr(e);
        }
        sim.forcing = raw.expr("forcing")?;
        sim.record_every = raw.or("output.record_every", 1)?;
        sim.diagnostics = raw.or("diagnostics", true)?;
        sim.validate()?;

        let g_spec = g_spec(raw)?;
        let xi_spec = match raw.get("xi.c") {
            None => None,
            Some(_) => Some(XiSpec::new(rate(raw, "xi")?, raw.or("xi.q", 1.0)?)?),
        };
        let verify = match raw.get("verify") {
            None => Check::ALL.to_vec(),
            Some(v) => split_list(v)
                .iter()
                .map(|s| Check::parse(s))
                .collect::<Result<Vec<_>>>()?,
        };
        let proof = ProofParams {
            delta: raw.or("proof.delta", 0.25)?,
            eps: raw.or("proof.eps", 1.0)?,
            t1: raw.or("proof.t1", 1.0)?,
            ..ProofParams::default()
        };
        let t1_fraction = raw.or("decay.t1_fraction", 0.1)?;
        if !(t1_fraction > 0.0 && t1_fraction < 1.0) {
            return Err(Error::validation("decay.t1_fraction", "must lie in (0, 1)"));
        }
        Ok(RunConfig {
            name: raw.get("name").unwrap_or("run").to_string(),
            sim,
            verify,
            output_dir: raw.get("output.dir").map(str::to_string),
            seed: raw.or("seed", 0)?,
            strict: raw.or("strict", false)?,
            g_spec,
            xi_spec,
            t1_fraction,
            komornik_sigma: raw.parsed("komornik.sigma")?,
            proof,
            mu: raw.parsed("exponent.mu")?,
            embed_restarts: raw.or("embed.restarts", 8)?,
            embed_max_iter: raw.or("embed.max_iter", 2000)?,
            bench_modes: raw.list("bench.modes")?,
            raw: raw.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raw(&RawConfig::load(path)?)
    }
}

fn grid(raw: &RawConfig) -> Result<Grid> {
    let cells: Option<usize> = raw.parsed("grid.cells")?;
    let length: f64 = raw.or("grid.length", 1.0)?;
    match raw.or("grid.dim", 1usize)? {
        1 => Grid::new_1d(
            length,
            cells.ok_or_else(|| Error::validation("grid.cells", "required"))?,
        ),
        2 => {
            let nx = raw
                .parsed("grid.nx")?
                .or(cells)
                .ok_or_else(|| Error::validation("grid.nx", "required"))?;
            let ny = raw
                .parsed("grid.ny")?
                .or(cells)
                .ok_or_else(|| Error::validation("grid.ny", "required"))?;
            Grid::new_2d(
                raw.or("grid.lx", length)?,
                raw.or("grid.ly", length)?,
                nx,
                ny,
            )
        }
        d => Err(Error::validation(
            "grid.dim",
            format!("expected 1 or 2, got {d}"),
        )),
    }
}

fn kernel(raw: &RawConfig) -> Result<KernelSpec> {
    let family = raw
        .get("kernel.family")
        .ok_or_else(|| Error::validation("kernel.family", "required"))?;
    match family {
        "exponential" => KernelSpec::exponential(raw.need("kernel.a")?, raw.need("kernel.b")?),
        "polynomial" => KernelSpec::polynomial(raw.need("kernel.a")?, raw.need("kernel.r")?),
        "stretched" => KernelSpec::stretched(raw.need("kernel.a")?, raw.need("kernel.p")?),
        "zero" => Ok(KernelSpec::zero()),
        "tabulated" => {
            let envelope = match raw
                .get("kernel.envelope")
                .map(|s| s.split_whitespace().collect::<Vec<_>>())
            {
                None => None,
                Some(parts) => {
                    let value = parts
                        .get(1)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| {
                            Error::validation(
                                "kernel.envelope",
                                "expected `exponential <rate>` or `power <exponent>`",
                            )
                        })?;
                    match parts[0] {
                        "exponential" => Some(Envelope::Exponential { rate: value }),
                        "power" => Some(Envelope::Power { exponent: value }),
                        other => {
                            return Err(Error::validation(
                                "kernel.envelope",
                                format!("unknown envelope `{other}`"),
                            ))
                        }
                    }
                }
            };
            KernelSpec::tabulated(raw.list("kernel.t")?, raw.list("kernel.g")?, envelope)
        }
        other => Err(Error::validation(
            "kernel.family",
            format!("unknown family `{other}`"),
        )),
    }
}

fn rate(raw: &RawConfig, prefix: &str) -> Result<Rate> {
    let c = raw.need(&format!("{prefix}.c"))?;
    let rate = match raw.parsed::<f64>(&format!("{prefix}.k"))? {
        None => Rate::Constant { c },
        Some(k) => Rate::Power { c, k },
    };
    rate.validate(prefix)?;
    Ok(rate)
}

fn g_spec(raw: &RawConfig) -> Result<Option<GSpec>> {
    let Some(family) = raw.get("g_fn.family") else {
        return Ok(None);
    };
    let family = match family {
        "linear" => GFamily::Linear {
            k: raw.or("g_fn.k", 1.0)?,
        },
        "power" => GFamily::Power {
            c: raw.or("g_fn.c", 1.0)?,
            m: raw.need("g_fn.m")?,
        },
        "stretched" => GFamily::Stretched {
            a: raw.need("g_fn.a")?,
            p: raw.need("g_fn.p")?,
        },
        other => {
            return Err(Error::validation(
                "g_fn.family",
                format!("unknown family `{other}`"),
            ))
        }
    };
    let zeta = if raw.get("zeta.c").is_some() {
        rate(raw, "zeta")?
    } else {
        Rate::Constant { c: 1.0 }
    };
    GSpec::new(family, raw.need("g_fn.r")?, zeta).map(Some)
}
