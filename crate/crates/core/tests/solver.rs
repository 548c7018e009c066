use std::f64::consts::PI;

use viscowave::exponents::ExponentField;
use viscowave::expr::Expr;
use viscowave::functionals::{energy_rate_check, energy_series, max_energy_increase};
use viscowave::grid::Grid;
use viscowave::kernels::KernelSpec;
use viscowave::solver::{run, FieldSource, MemoryMode, SimConfig};

fn config(cells: usize, kernel: KernelSpec, alpha: f64, dt: f64, horizon: f64) -> SimConfig {
    let grid = Grid::new_1d(1.0, cells).unwrap();
    let p = ExponentField::constant(&grid, 3.0).unwrap();
    SimConfig::new(grid, kernel, p, alpha, dt, horizon)
}

fn order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn damped_wave_dissipates() {
    let mut cfg = config(128, KernelSpec::zero(), 0.0, 0.005, 10.0);
    cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)").unwrap());
    cfg.u1 = FieldSource::Expr(Expr::parse("sin(3*pi*x)").unwrap());
    let energy = energy_series(&run(&cfg).unwrap()).unwrap();
    assert!(max_energy_increase(&energy) <= 1e-12);
    let (e0, e_end) = (energy[0].e, energy.last().unwrap().e);
    assert!(e_end < 0.1 * e0);
}

#[test]
fn nonlinear_memory_run_dissipates() {
    let mut cfg = config(
        128,
        KernelSpec::exponential(0.5, 1.0).unwrap(),
        0.05,
        0.005,
        10.0,
    );
    cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)").unwrap());
    cfg.memory_mode = MemoryMode::Prony {
        modes: 4,
        tol: 1e-8,
    };
    let energy = energy_series(&run(&cfg).unwrap()).unwrap();
    assert!(max_energy_increase(&energy) <= 1e-9);
}

/// `u = sin(πx) cos t` with kernel `a e^{-bt}`; the memory convolution of
/// `Δu` has the closed form used in the source term.
#[test]
fn manufactured_solution_converges_at_second_order() {
    let (a, b) = (0.5, 1.0);
    let f = format!(
        "sin(pi*x)*((pi^2 - 1)*cos(t) - sin(t) - pi^2*{a}*({b}*cos(t) + sin(t) - {b}*exp(-{b}*t))/(1 + {b}^2))"
    );
    let horizon = 1.0;
    let mut errors = Vec::new();
    for cells in [32, 64, 128] {
        let h = 1.0 / cells as f64;
        let mut cfg = config(
            cells,
            KernelSpec::exponential(a, b).unwrap(),
            0.0,
            0.5 * h,
            horizon,
        );
        cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)").unwrap());
        cfg.forcing = Some(Expr::parse(&f).unwrap());
        cfg.diagnostics = false;
        let traj = run(&cfg).unwrap();
        let err = (0..=cells)
            .map(|i| {
                let x = i as f64 * h;
                (traj.final_u[i] - (PI * x).sin() * horizon.cos()).abs()
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let p = order(&errors);
    assert!(p >= 1.9, "errors {errors:?}, order {p}");
}

#[test]
fn energy_rate_residual_converges() {
    let mut residuals = Vec::new();
    for dt in [0.01, 0.005, 0.0025] {
        let mut cfg = config(64, KernelSpec::zero(), 0.0, dt, 2.0);
        cfg.u0 = FieldSource::Expr(Expr::parse("sin(pi*x)").unwrap());
        cfg.u1 = FieldSource::Expr(Expr::parse("sin(2*pi*x)").unwrap());
        residuals.push(energy_rate_check(&run(&cfg).unwrap()).unwrap().max_abs);
    }
    let p = order(&residuals);
    assert!(p >= 1.8, "residuals {residuals:?}, order {p}");
}
