//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use viscowave::cli::{bench_command, run_command, Analysis, Check, RunConfig, RunOutcome, Status};
use viscowave::exponents::{
    estimate_embedding_constant, luxemburg_norm, modular, AscentOptions, EmbeddingTarget,
    ExponentField,
};
use viscowave::expr::Expr;
use viscowave::functionals::{
    check_lemma_2_6, check_lemma_2_7_and_2_8, energy_rate_check, max_energy_increase,
    residual_elasticity,
};
use viscowave::grid::Grid;
use viscowave::kernels::{GFamily, KernelSpec};
use viscowave::quad;
use viscowave::solver::{run, FieldSource, SimConfig};
use viscowave::verify::{check_komornik, DecayModel, TailModel};

const DEMOS: [&str; 7] = [
    "demo",
    "polynomial_1d",
    "stretched_1d",
    "exponential_2d",
    "polynomial_2d",
    "stretched_2d",
    "damped_1d",
];

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag} {name}: {detail}");
        if !pass {
            self.failed.push(id);
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(format!("{name}.cfg"))).unwrap()
}

fn check_report(a: &Analysis, check: Check) -> &Value {
    &a.checks.iter().find(|c| c.id == check.id()).unwrap().report
}

fn hypothesis(report: &Value, name: &str) -> bool {
    report["hypotheses"]
        .as_array()
        .and_then(|h| h.iter().find(|x| x["name"] == name))
        .is_some_and(|x| x["pass"] == true)
}

/// `min over records of bound - E`, over records where the bound is defined.
fn domination_margin(a: &Analysis, id: &str) -> f64 {
    let bound = &a.bounds.iter().find(|(b, _)| *b == id).unwrap().1;
    a.energy
        .iter()
        .zip(bound)
        .filter(|(_, b)| b.is_finite())
        .map(|(r, b)| b - r.e)
        .fold(f64::INFINITY, f64::min)
}

fn order(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

fn energy_rate_order(report: &mut Report) {
    let start = Instant::now();
    let mut residuals = Vec::new();
    for dt in [0.004, 0.002, 0.001] {
        let grid = Grid::new_1d(1.0, 128).unwrap();
        let p = ExponentField::constant(&grid, 3.0).unwrap();
        let mut cfg = SimConfig::new(grid, KernelSpec::zero(), p, 0.0, dt, 5.0);
        cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x) + 0.5*sin(3*pi*x)").unwrap());
        cfg.u1 = FieldSource::Expr(Expr::parse("sin(2*pi*x)").unwrap());
        residuals.push(energy_rate_check(&run(&cfg).unwrap()).unwrap().max_abs);
    }
    let secs = start.elapsed().as_secs_f64();
    let p = order(&residuals);
    report.record(
        1,
        "energy identity order",
        p >= 1.8 && secs < 30.0,
        format!(
            "residuals {:?}, observed order {p:.3}, {secs:.1} s",
            residuals
                .iter()
                .map(|r| format!("{r:.3e}"))
                .collect::<Vec<_>>()
        ),
    );
}

fn dissipation(report: &mut Report, runs: &BTreeMap<&str, RunOutcome>, secs: f64) {
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    for (name, out) in runs {
        let inc = max_energy_increase(&out.analysis.energy);
        worst = worst.max(inc);
        all &= inc <= 1e-9 && out.analysis.status(Check::Energy) == Some(Status::Pass);
        println!("    {name}: max relative increase {inc:.3e}");
    }
    report.record(
        2,
        "dissipation on demo suite",
        all && runs.len() >= 6 && secs < 300.0,
        format!(
            "{} configs, worst increase {worst:.3e}, {secs:.1} s",
            runs.len()
        ),
    );
}

fn wells(report: &mut Report, demo: &Analysis) {
    let Some(w) = demo.well else {
        report.record(
            3,
            "potential well lemmas",
            false,
            "no well constants".into(),
        );
        return;
    };
    let margin = check_lemma_2_6(&demo.energy, &w);
    let rep = check_lemma_2_7_and_2_8(&demo.energy, &w);
    let pass = rep.applicable
        && margin.pass
        && margin.min_margin >= 0.0
        && rep.lambda_gap > 0.0
        && rep.aux_excess <= 1e-8;
    report.record(
        3,
        "potential well lemmas",
        pass,
        format!(
            "E(0) {:.4} < E1 {:.4}, min E - R(lambda) {:.3e}, lambda gap {:.4}, aux excess {:.3e}",
            demo.energy[0].e, w.e1, margin.min_margin, rep.lambda_gap, rep.aux_excess
        ),
    );
}

fn xi_decay_exponential(report: &mut Report, demo: &Analysis) {
    let r = check_report(demo, Check::Thm31);
    let e0 = demo.energy[0].e;
    let margin = domination_margin(demo, Check::Thm31.id());
    let r2 = demo
        .fits
        .iter()
        .find(|f| f.model == DecayModel::Exponential)
        .and_then(|f| f.r2)
        .unwrap_or(0.0);
    let pass = demo.status(Check::Thm31) == Some(Status::Pass)
        && hypothesis(r, "alpha_small")
        && r2 >= 0.99
        && margin >= -1e-8 * e0;
    report.record(
        4,
        "exponential decay, q = 1",
        pass,
        format!(
            "K_fit {:.4}, tail R^2 {r2:.6}, margin {:.3e} E(0), alpha admissible {}",
            r["constants"]["k_fit"].as_f64().unwrap_or(f64::NAN),
            margin / e0,
            hypothesis(r, "alpha_small")
        ),
    );
}

fn xi_decay_algebraic(report: &mut Report, poly: &Analysis) {
    let e0 = poly.energy[0].e;
    let margin = domination_margin(poly, Check::Thm31.id());
    let slope = poly
        .fits
        .iter()
        .find(|f| f.model == DecayModel::Algebraic)
        .map_or(f64::NAN, |f| f.slope);
    let c2 = &check_report(poly, Check::Thm32)["constants"];
    let frac = c2["c2_attained_fraction"].as_f64().unwrap_or(f64::NAN);
    let pass = poly.status(Check::Thm31) == Some(Status::Pass)
        && margin >= -1e-8 * e0
        && slope <= -1.0
        && frac < 0.6;
    report.record(
        5,
        "algebraic decay, q = 3/2",
        pass,
        format!(
            "margin {:.3e} E(0), log-log slope {slope:.3}, sup E(1+t)/E(0) = {:.4} attained at {:.1}% of horizon",
            margin / e0,
            c2["c2"].as_f64().unwrap_or(f64::NAN),
            100.0 * frac
        ),
    );
}

fn stretched_example(report: &mut Report, cfg: &RunConfig, run: &Analysis) {
    let g = cfg.g_spec.unwrap();
    let GFamily::Stretched { a, p } = g.family else {
        report.record(
            6,
            "stretched kernel example",
            false,
            "g_fn is not stretched".into(),
        );
        return;
    };
    let (lo, hi) = (g.t_min().ln(), g.r.ln());
    let mut worst = f64::NEG_INFINITY;
    let mut chain = true;
    for i in 0..50 {
        let t = (lo + (hi - lo) * i as f64 / 49.0).exp();
        let (lhs, rhs) = (g.g1(t).unwrap(), (a / t).ln().powf(1.0 / p));
        worst = worst.max(lhs - rhs);
        chain &= lhs <= rhs;
    }
    let ex = check_report(run, Check::Example);
    let pass = chain && run.status(Check::Example) == Some(Status::Pass);
    report.record(
        6,
        "stretched kernel example",
        pass,
        format!(
            "max G1(t) - (ln(a/t))^(1/p) over 50 samples {worst:.3e}, k {:.4}, min log margin {:.3e}",
            ex["k"].as_f64().unwrap_or(f64::NAN),
            ex["min_log_margin"].as_f64().unwrap_or(f64::NAN)
        ),
    );
}

fn komornik(report: &mut Report) {
    let t: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.005).collect();
    let ones = vec![1.0; t.len()];
    let exp: Vec<f64> = t.iter().map(|s| 2.0 * (-0.8 * s).exp()).collect();
    let alg: Vec<f64> = t.iter().map(|s| 3.0 * (1.0 + s).powi(-2)).collect();
    let flat = vec![1.0; t.len()];
    let a = check_komornik(&t, &exp, &t, &ones, 0.0, Some(0.8), TailModel::Exponential).unwrap();
    let b = check_komornik(&t, &alg, &t, &ones, 0.5, Some(2.0), TailModel::Algebraic).unwrap();
    let c = check_komornik(&t, &flat, &t, &ones, 0.0, Some(1.0), TailModel::Exponential).unwrap();
    let exact = |r: &viscowave::verify::KomornikReport| {
        r.hypothesis_holds && r.conclusion_holds && r.max_hypothesis_residual.abs() <= 1e-8
    };
    report.record(
        7,
        "Komornik checker",
        exact(&a) && exact(&b) && !c.hypothesis_holds,
        format!(
            "exponential residual {:.2e}, algebraic residual {:.2e}, constant E hypothesis holds: {}",
            a.max_hypothesis_residual, b.max_hypothesis_residual, c.hypothesis_holds
        ),
    );
}

fn j_identity(report: &mut Report, runs: &[(&str, &Analysis)]) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, a) in runs {
        let r = check_report(a, Check::JIdentity);
        let (res, lhs) = (r["residual"].as_f64(), r["lhs"].as_f64());
        let rel = match (res, lhs) {
            (Some(x), Some(l)) => x.abs() / l.abs(),
            _ => f64::INFINITY,
        };
        pass &= rel <= 1e-5 && a.status(Check::JIdentity) == Some(Status::Pass);
        parts.push(format!("{name} {rel:.2e}"));
    }
    report.record(
        8,
        "J decomposition identity",
        pass,
        format!("relative residual {}", parts.join(", ")),
    );
}

fn bench(report: &mut Report) {
    let cfg = load("bench");
    let b = bench_command(&cfg, None).unwrap();
    let e = &b.entries[0];
    let pass =
        b.steps >= 20_000 && b.nodes == 257 && e.max_rel_discrepancy < 1e-6 && e.speedup >= 10.0;
    report.record(
        9,
        "memory fast path",
        pass,
        format!(
            "{} steps, {} modes, discrepancy {:.2e}, direct {:.2} s, fast {:.2} s, speedup {:.1}x",
            b.steps, e.modes, e.max_rel_discrepancy, b.direct_seconds, e.seconds, e.speedup
        ),
    );
}

/// Smallest eigenvalue of `-Δ_h` by inverse power iteration.
fn inverse_power_lambda(grid: &Grid) -> f64 {
    let mut v: Vec<f64> = (0..grid.len())
        .map(|k| if grid.is_boundary(k) { 0.0 } else { 1.0 })
        .collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = grid.solve_poisson(&v);
        let n = grid.norm_sq(&w).sqrt();
        v = w.iter().map(|x| x / n).collect();
        let next = grid.grad_norm_sq(&v) / grid.norm_sq(&v);
        if (next - lambda).abs() <= 1e-14 * next {
            break;
        }
        lambda = next;
    }
    lambda
}

fn embedding(report: &mut Report) {
    let pi2 = std::f64::consts::PI.powi(2);
    let opts = AscentOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (grid, exact) in [
        (Grid::new_1d(1.0, 128).unwrap(), 1.0 / pi2),
        (Grid::new_2d(1.0, 1.0, 32, 32).unwrap(), 1.0 / (2.0 * pi2)),
    ] {
        let est = estimate_embedding_constant(&grid, EmbeddingTarget::Fixed(2.0), &opts)
            .unwrap()
            .value;
        let oracle = 1.0 / inverse_power_lambda(&grid);
        let (vs_oracle, vs_exact) = ((est - oracle).abs() / oracle, (est - exact).abs() / exact);
        pass &= vs_oracle <= 0.02 && vs_exact <= 0.02;
        lines.push(format!(
            "{}D B2 {est:.5} (oracle {vs_oracle:.1e}, exact {vs_exact:.1e})",
            grid.dim()
        ));
    }

    let grid = Grid::new_2d(1.0, 1.0, 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lux_err: f64 = 0.0;
    let mut sandwich = true;
    for _ in 0..100 {
        let f: Vec<f64> = (0..grid.len())
            .map(|k| {
                if grid.is_boundary(k) {
                    0.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let q = rng.random_range(1.1..4.0);
        let constant = vec![q; grid.len()];
        let lp = grid
            .weights()
            .iter()
            .zip(&f)
            .map(|(w, v)| w * v.abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q);
        lux_err = lux_err.max((luxemburg_norm(&grid, &f, &constant).unwrap() - lp).abs() / lp);

        let (p1, p2) = (rng.random_range(1.1..2.5), rng.random_range(2.5..5.0));
        let p: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(p1..p2)).collect();
        let (p1, p2) = p
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        let n = luxemburg_norm(&grid, &f, &p).unwrap();
        let rho = modular(&grid, &f, &p).unwrap();
        let (a, b) = (n.powf(p1), n.powf(p2));
        let slack = 1e-9 * rho;
        sandwich &= a.min(b) - slack <= rho && rho <= a.max(b) + slack;
    }
    pass &= lux_err <= 1e-10 && sandwich;
    lines.push(format!(
        "Luxemburg vs L^p {lux_err:.1e}, sandwich on 100 fields {sandwich}"
    ));
    report.record(10, "embedding and norm constants", pass, lines.join(", "));
}

fn kernel_analytics(report: &mut Report) {
    let (a, b) = (0.5, 2.0);
    let k = KernelSpec::exponential(a, b).unwrap();
    let mut err: f64 = (residual_elasticity(&k).unwrap() - (1.0 - a / b)).abs();
    for t in [0.0, 0.1, 1.0, 5.0] {
        let exact = a / b * (-b * t).exp();
        err = err.max((k.tail_integral(t).unwrap() - exact).abs());
    }
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    let mut last = 0.0;
    for j in 1..=20 {
        let d = 0.5f64.powi(j);
        let exact = a / (b * (b + d));
        let m = k.m_delta(d).unwrap();
        let quadrature = quad::integrate_to_infinity(
            |s| match k.value(s) {
                g if g > 0.0 => g / k.k_delta(d, s).unwrap(),
                _ => 0.0,
            },
            0.0,
            1e-15,
            1e-13,
        )
        .unwrap();
        err = err.max((m - exact).abs()).max((quadrature - exact).abs());
        monotone &= d * m < prev;
        prev = d * m;
        last = d * m;
    }
    report.record(
        11,
        "kernel analytics",
        err <= 1e-10 && monotone && last < 1e-6,
        format!("max error {err:.2e}, delta M(delta) decreasing {monotone}, at 2^-20 {last:.2e}"),
    );
}

const ARTIFACTS: [&str; 5] = [
    "energy.csv",
    "diagnostics.csv",
    "verdicts.json",
    "meta.json",
    "plot.gp",
];

fn determinism(report: &mut Report, first: &Path, root: &Path) {
    let again = root.join("demo_again");
    run_command(&load("demo"), &again).unwrap();
    let differing: Vec<&str> = ARTIFACTS
        .iter()
        .copied()
        .filter(|f| fs::read(first.join(f)).unwrap() != fs::read(again.join(f)).unwrap())
        .collect();
    report.record(
        12,
        "determinism",
        differing.is_empty(),
        format!(
            "{} artifacts compared, differing: {differing:?}",
            ARTIFACTS.len()
        ),
    );
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut report = Report { failed: Vec::new() };

    energy_rate_order(&mut report);

    let start = Instant::now();
    let mut runs = BTreeMap::new();
    let mut cfgs = BTreeMap::new();
    for name in DEMOS {
        let cfg = load(name);
        runs.insert(name, run_command(&cfg, &root.path().join(name)).unwrap());
        cfgs.insert(name, cfg);
    }
    dissipation(&mut report, &runs, start.elapsed().as_secs_f64());

    wells(&mut report, &runs["demo"].analysis);
    xi_decay_exponential(&mut report, &runs["demo"].analysis);
    xi_decay_algebraic(&mut report, &runs["polynomial_1d"].analysis);
    stretched_example(
        &mut report,
        &cfgs["stretched_1d"],
        &runs["stretched_1d"].analysis,
    );
    komornik(&mut report);
    j_identity(
        &mut report,
        &[
            ("demo", &runs["demo"].analysis),
            ("polynomial_1d", &runs["polynomial_1d"].analysis),
        ],
    );
    bench(&mut report);
    embedding(&mut report);
    kernel_analytics(&mut report);
    determinism(&mut report, &runs["demo"].dir, root.path());

    if report.failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: failed criteria {:?}", report.failed);
        std::process::exit(1);
    }
}
