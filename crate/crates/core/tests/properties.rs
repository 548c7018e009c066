use proptest::prelude::*;

use viscowave::exponents::{luxemburg_norm, modular};
use viscowave::grid::Grid;
use viscowave::kernels::{GFamily, GSpec, Rate};

fn grid() -> Grid {
    Grid::new_1d(1.0, 32).unwrap()
}

/// Interior values from `raw`, pinned to zero on the boundary.
fn field(raw: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; 33];
    f[1..32].copy_from_slice(raw);
    f
}

fn exponent(lo: f64, hi: f64) -> Vec<f64> {
    (0..=32).map(|i| lo + (hi - lo) * i as f64 / 32.0).collect()
}

fn nonzero(raw: &[f64]) -> bool {
    raw.iter().any(|v| v.abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn luxemburg_is_homogeneous(
        raw in prop::collection::vec(-5.0f64..5.0, 31),
        c in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0],
        lo in 1.2f64..3.0,
        span in 0.0f64..2.0,
    ) {
        prop_assume!(nonzero(&raw));
        let g = grid();
        let f = field(&raw);
        let p = exponent(lo, lo + span);
        let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
        let n = luxemburg_norm(&g, &f, &p).unwrap();
        let ns = luxemburg_norm(&g, &scaled, &p).unwrap();
        prop_assert!((ns - c.abs() * n).abs() <= 1e-10 * ns);
    }

    #[test]
    fn modular_is_sandwiched_by_norm_powers(
        raw in prop::collection::vec(-5.0f64..5.0, 31),
        lo in 1.2f64..3.0,
        span in 0.0f64..2.0,
    ) {
        prop_assume!(nonzero(&raw));
        let g = grid();
        let f = field(&raw);
        let (p1, p2) = (lo, lo + span);
        let p = exponent(p1, p2);
        let n = luxemburg_norm(&g, &f, &p).unwrap();
        let rho = modular(&g, &f, &p).unwrap();
        let (a, b) = (n.powf(p1), n.powf(p2));
        let slack = 1e-9 * rho.max(1.0);
        prop_assert!(a.min(b) - slack <= rho && rho <= a.max(b) + slack);
    }

    #[test]
    fn young_inequality_holds(s_frac in 0.01f64..1.0, t in 0.0f64..3.0, m in 1.2f64..3.0) {
        let g = GSpec::new(GFamily::Power { c: 1.0, m }, 0.5, Rate::Constant { c: 1.0 }).unwrap();
        let ext = g.extend().unwrap();
        let s = s_frac * ext.d1(0.5);
        let conj = ext.conjugate(s).unwrap();
        prop_assert!(s * t <= ext.value(t) + conj + 1e-10 * (1.0 + s * t));
    }

    #[test]
    fn g1_is_decreasing(u in 0.02f64..0.98, v in 0.02f64..0.98, p in 0.3f64..0.9) {
        prop_assume!((u - v).abs() > 1e-6);
        let a = 0.2;
        let g = GSpec::new(GFamily::Stretched { a, p }, 0.05, Rate::Constant { c: 1.0 }).unwrap();
        let (lo, hi) = (u.min(v) * g.r, u.max(v) * g.r);
        prop_assert!(g.g1(lo).unwrap() > g.g1(hi).unwrap());
        prop_assert!(g.g1(g.r).unwrap().abs() < 1e-15);
    }
}
