//! Sum-of-exponentials approximation `g(t) ≈ Σ w_m exp(-θ_m t)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PronyApprox {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
    /// Maximum relative error on the validation grid over `[0, horizon]`.
    pub max_rel_error: f64,
    pub horizon: f64,
}

impl PronyApprox {
    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(w, th)| w * (-th * t).exp())
            .sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self
            .weights
            .iter()
            .zip(&self.rates)
            .map(|(w, th)| w * th * (-th * t).exp())
            .sum::<f64>()
    }

    /// `∫_t^∞` of the approximant.
    pub fn tail(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(w, th)| w / th * (-th * t).exp())
            .sum()
    }
}

/// Validation grid: `0`, 4000 uniform points and 1000 log-spaced points
/// from `1e-3` (or `horizon/1000` if smaller) to `horizon`.
fn validation_grid(horizon: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=4000).map(|i| horizon * i as f64 / 4000.0).collect();
    t.extend(geomspace((1e-3f64).min(horizon / 1000.0), horizon, 1000));
    t
}

fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fits at most `modes` exponentials to `g` on `[0, horizon]`.
///
/// A log-spaced rate dictionary is solved by non-negative least squares on
/// the relative residual, the active rates are merged down to `modes`, and
/// the rates are then polished by Levenberg-Marquardt in `ln θ` with the
/// weights re-solved at every trial. The result is checked on a dense grid
/// and rejected if the maximum relative error exceeds `bound`.
pub fn prony_fit(
    kernel: &KernelSpec,
    modes: usize,
    horizon: f64,
    bound: f64,
) -> Result<PronyApprox> {
    if modes == 0 {
        return Err(Error::InvalidArgument(
            "Prony fit needs at least one mode".into(),
        ));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Prony horizon must be positive, got {horizon}"
        )));
    }
    if kernel.is_zero() {
        return Ok(PronyApprox {
            weights: vec![],
            rates: vec![],
            max_rel_error: 0.0,
            horizon,
        });
    }
    if let KernelFamily::Exponential { a, b } = kernel.family {
        let approx = PronyApprox {
            weights: vec![a],
            rates: vec![b],
            max_rel_error: 0.0,
            horizon,
        };
        return Ok(approx);
    }

    let t_lo = (1e-4f64).min(horizon * 1e-4);
    let mut ts = vec![0.0];
    ts.extend(geomspace(t_lo, horizon, 400));
    ts.extend((1..200).map(|i| horizon * i as f64 / 200.0));
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gs: Vec<f64> = ts.iter().map(|&t| kernel.value(t)).collect();
    if gs.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidArgument(
            "Prony fit needs g > 0 on the fitting grid".into(),
        ));
    }

    let dict = geomspace(0.01 / horizon, 10.0 / t_lo, 240);
    let a = design(&ts, &gs, &dict);
    let ones = DVector::from_element(ts.len(), 1.0);
    let w = nnls(&a, &ones);
    let mut active: Vec<(f64, f64)> = dict
        .iter()
        .zip(w.iter())
        .filter(|(_, w)| **w > 0.0)
        .map(|(th, w)| (*th, *w))
        .collect();
    while active.len() > modes {
        // merge the pair closest in ln θ
        let (k, _) = active
            .windows(2)
            .enumerate()
            .map(|(k, p)| (k, (p[1].0 / p[0].0).ln()))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        let (t0, w0) = active[k];
        let (t1, w1) = active[k + 1];
        let wsum = w0 + w1;
        let theta = ((w0 * t0.ln() + w1 * t1.ln()) / wsum).exp();
        active[k] = (theta, wsum);
        active.remove(k + 1);
    }
    let mut starts: Vec<Vec<f64>> = vec![active.iter().map(|(th, _)| th.ln()).collect()];
    for span in [1e2, 1e3, 1e4, 1e5] {
        let lo = 0.1 / horizon;
        starts.push(
            geomspace(lo, lo * span, modes)
                .iter()
                .map(|v| v.ln())
                .collect(),
        );
    }
    let validation = validation_grid(horizon);
    let vg: Vec<f64> = validation.iter().map(|&t| kernel.value(t)).collect();
    let max_err = |rates: &[f64], weights: &[f64]| {
        validation
            .iter()
            .zip(&vg)
            .map(|(&t, g)| {
                let v: f64 = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, th)| w * (-th * t).exp())
                    .sum();
                ((v - g) / g).abs()
            })
            .fold(0.0, f64::max)
    };
    let bounds = ((0.01 / horizon).ln() - 3.0, (10.0 / t_lo).ln() + 3.0);
    const ROUNDS: usize = 8;
    let best = starts
        .into_par_iter()
        .map(|mut z| {
            let mut omega = vec![1.0; ts.len()];
            let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
            for round in 0..ROUNDS {
                polish(&ts, &gs, &omega, &mut z, bounds);
                let rates: Vec<f64> = z.iter().map(|v| v.exp()).collect();
                let weights = solve_weights(&ts, &gs, &omega, &rates);
                let err = max_err(&rates, weights.as_slice());
                if best.as_ref().is_none_or(|b| err < b.0) {
                    best = Some((err, rates.clone(), weights.as_slice().to_vec()));
                }
                if round + 1 == ROUNDS {
                    break;
                }
                // Lawson reweighting pushes the least-squares fit toward minimax
                let r = residual(&ts, &gs, &omega, &z);
                let mut total = 0.0;
                for (i, o) in omega.iter_mut().enumerate() {
                    *o *= r[i].abs() / o.sqrt().max(1e-300) + 1e-300;
                    total += *o;
                }
                omega.iter_mut().for_each(|o| *o *= ts.len() as f64 / total);
            }
            best.expect("at least one round")
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let (_, rates, weights) = best.expect("at least one start");
    let (rates, weights): (Vec<f64>, Vec<f64>) = rates
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .unzip();
    let mut approx = PronyApprox {
        weights,
        rates,
        max_rel_error: 0.0,
        horizon,
    };
    approx.max_rel_error = validation_grid(horizon)
        .into_iter()
        .map(|t| {
            let g = kernel.value(t);
            ((approx.value(t) - g) / g).abs()
        })
        .fold(0.0, f64::max);
    if !(approx.max_rel_error <= bound) {
        return Err(Error::FitError {
            achieved: approx.max_rel_error,
            bound,
            modes,
        });
    }
    Ok(approx)
}

fn design(ts: &[f64], gs: &[f64], rates: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ts.len(), rates.len(), |i, k| {
        (-rates[k] * ts[i]).exp() / gs[i]
    })
}

fn solve_weights(ts: &[f64], gs: &[f64], omega: &[f64], rates: &[f64]) -> DVector<f64> {
    let a = weighted_design(ts, gs, omega, rates);
    let b = DVector::from_iterator(ts.len(), omega.iter().map(|o| o.sqrt()));
    nnls(&a, &b)
}

fn weighted_design(ts: &[f64], gs: &[f64], omega: &[f64], rates: &[f64]) -> DMatrix<f64> {
    let mut a = design(ts, gs, rates);
    for (i, o) in omega.iter().enumerate() {
        a.row_mut(i).scale_mut(o.sqrt());
    }
    a
}

fn residual(ts: &[f64], gs: &[f64], omega: &[f64], z: &[f64]) -> DVector<f64> {
    let rates: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let a = weighted_design(ts, gs, omega, &rates);
    let b = DVector::from_iterator(ts.len(), omega.iter().map(|o| o.sqrt()));
    // unconstrained weights keep the polish cheap; NNLS runs on the result
    let qr = a.clone().qr();
    let w = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &b))
        .unwrap_or_else(|| DVector::zeros(rates.len()));
    let fit = design(ts, gs, &rates) * w;
    DVector::from_iterator(
        ts.len(),
        (0..ts.len()).map(|i| omega[i].sqrt() * (fit[i] - 1.0)),
    )
}

/// Levenberg-Marquardt on the variable-projection residual in `ln θ`.
fn polish(ts: &[f64], gs: &[f64], omega: &[f64], z: &mut [f64], bounds: (f64, f64)) {
    let m = z.len();
    let mut r = residual(ts, gs, omega, z);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut jac = DMatrix::zeros(ts.len(), m);
        for k in 0..m {
            let h = 1e-6;
            let mut zp = z.to_vec();
            zp[k] += h;
            let rp = residual(ts, gs, omega, &zp);
            jac.set_column(k, &((rp - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for k in 0..m {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = z
                .iter()
                .zip(step.iter())
                .map(|(a, b)| (a + b).clamp(bounds.0, bounds.1))
                .collect();
            let rt = residual(ts, gs, omega, &trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                z.copy_from_slice(&trial);
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = rel > 1e-10;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
}

/// Lawson-Hanson non-negative least squares.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm() * b.norm().max(1.0);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let z = sub
            .svd(true, true)
            .solve(b, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _ in 0..3 * n {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match cand {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in (0..n).filter(|&j| passive[j] && z[j] <= 0.0) {
                alpha = alpha.min(x[j] / (x[j] - z[j]));
            }
            x += (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= 1e-300 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}
