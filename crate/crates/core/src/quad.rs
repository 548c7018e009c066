//! Numerical helpers shared across modules: adaptive Gauss-Kronrod
//! quadrature, bracketed bisection, sample-series integration and
//! ordinary least squares on a line.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    let (v, e) = gk15(&f, a, b);
    let mut segs = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    for _ in 0..4000 {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) =
            segs.iter().enumerate().fold(
                (0, f64::MIN),
                |acc, (i, s)| if s.3 > acc.1 { (i, s.3) } else { acc },
            );
        let (sa, sb, sv, se) = segs.swap_remove(idx);
        let m = 0.5 * (sa + sb);
        let (v1, e1) = gk15(&f, sa, m);
        let (v2, e2) = gk15(&f, m, sb);
        total += v1 + v2 - sv;
        err += e1 + e2 - se;
        segs.push((sa, m, v1, e1));
        segs.push((m, sb, v2, e2));
    }
    // recompute to shed accumulated rounding from the running updates
    let total: f64 = segs.iter().map(|s| s.2).sum();
    let err: f64 = segs.iter().map(|s| s.3).sum();
    if !total.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integral on [{a}, {b}]"
        )));
    }
    if err > 100.0 * abs_tol.max(rel_tol * total.abs()) {
        return Err(Error::Quadrature(format!(
            "error estimate {err:.3e} on [{a}, {b}] after subdivision limit"
        )));
    }
    Ok(total)
}

/// Integral of `f` over `[a, ∞)` through the map `s = a + x / (1 - x)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mapped = |x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - x;
        let s = a + x / one_minus;
        let v = f(s) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, abs_tol, rel_tol)
}

/// Bisection for a root of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bisection(format!(
            "no sign change on [{lo:e}, {hi:e}] (f = {flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Composite trapezoid over (possibly non-uniform) samples.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Running trapezoid integral, `out[0] = 0`.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    if !t.is_empty() {
        out.push(0.0);
    }
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

/// Integral over each sample interval of a positive series, interpolating
/// `ln y` with a local cubic and integrating `exp` of it by 4-point
/// Gauss-Legendre. Exact for exponentials and fourth order otherwise.
/// Intervals touching a non-positive sample fall back to the trapezoid.
pub fn log_cubic_intervals(t: &[f64], y: &[f64]) -> Vec<f64> {
    const GX: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const GW: [f64; 4] = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    let n = t.len();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let (a, b) = (t[i], t[i + 1]);
        if y[i] <= 0.0 || y[i + 1] <= 0.0 || n < 4 {
            out.push(0.5 * (b - a) * (y[i] + y[i + 1]));
            continue;
        }
        let start = if i == 0 {
            0
        } else if i + 2 >= n {
            n - 4
        } else {
            i - 1
        };
        let idx = [start, start + 1, start + 2, start + 3];
        if idx.iter().any(|&k| y[k] <= 0.0) {
            out.push(0.5 * (b - a) * (y[i] + y[i + 1]));
            continue;
        }
        let ly: Vec<f64> = idx.iter().map(|&k| y[k].ln()).collect();
        let tx: Vec<f64> = idx.iter().map(|&k| t[k]).collect();
        let interp = |s: f64| {
            let mut acc = 0.0;
            for j in 0..4 {
                let mut basis = 1.0;
                for m in 0..4 {
                    if m != j {
                        basis *= (s - tx[m]) / (tx[j] - tx[m]);
                    }
                }
                acc += basis * ly[j];
            }
            acc
        };
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let v: f64 = GX
            .iter()
            .zip(GW.iter())
            .map(|(x, w)| w * interp(c + h * x).exp())
            .sum();
        out.push(v * h);
    }
    out
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; `None` when `y` has zero variance.
    pub r2: Option<f64>,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let r2 = if syy <= (1e-14 * scale).powi(2) * nf {
        None
    } else {
        let ss_res: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let r = yi - (intercept + slope * xi);
                r * r
            })
            .sum();
        Some((1.0 - ss_res / syy).clamp(0.0, 1.0))
    };
    Some(LineFit {
        slope,
        intercept,
        r2,
    })
}
