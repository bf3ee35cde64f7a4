// SPDX-License-Identifier: Apache-2.0

//! Small dense Levenberg-Marquardt least squares and the sweep models.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("fit failed: {reason}")]
pub struct FitFailure {
    pub reason: String,
}

impl FitFailure {
    fn new(reason: impl Into<String>) -> Self {
        FitFailure { reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma errors from the covariance at the solution, scaled by the
    /// residual variance.
    pub errors: Vec<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot = a[col].clone();
            for (v, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn sum_sq(model: &dyn Fn(f64, &[f64]) -> f64, x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (yi - model(xi, p)).powi(2)).sum()
}

/// Minimizes `sum (y - model(x, p))^2` from `p0`.
///
/// The Jacobian is taken by central differences with a step relative to
/// each parameter's magnitude.
pub fn levenberg_marquardt(
    model: &dyn Fn(f64, &[f64]) -> f64,
    x: &[f64],
    y: &[f64],
    p0: &[f64],
) -> Result<FitResult, FitFailure> {
    let n = p0.len();
    if x.len() != y.len() || x.len() <= n {
        return Err(FitFailure::new("not enough data points"));
    }
    let mut p = p0.to_vec();
    let mut cost = sum_sq(model, x, y, &p);
    if !cost.is_finite() {
        return Err(FitFailure::new("model is not finite at the initial guess"));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xi| {
                (0..n)
                    .map(|j| {
                        let h = 1e-7 * p[j].abs().max(1e-12);
                        let mut hi = p.to_vec();
                        let mut lo = p.to_vec();
                        hi[j] += h;
                        lo[j] -= h;
                        (model(xi, &hi) - model(xi, &lo)) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    };
    let mut jac = jacobian(&p);
    for _ in 0..500 {
        iterations += 1;
        let r: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - model(xi, &p)).collect();
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..n {
                jtr[a] += row[a] * ri;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj.clone();
            for k in 0..n {
                m[k][k] += lambda * jtj[k][k].max(1e-300);
            }
            let Some(step) = solve(m, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let c = sum_sq(model, x, y, &trial);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                let small_step = step.iter().zip(&trial).all(|(s, t)| s.abs() <= 1e-12 * t.abs().max(1e-300));
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-14 || small_step {
                    return finish(model, x, y, p, cost, iterations, &jacobian);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            return finish(model, x, y, p, cost, iterations, &jacobian);
        }
        jac = jacobian(&p);
    }
    finish(model, x, y, p, cost, iterations, &jacobian)
}

fn finish(
    _model: &dyn Fn(f64, &[f64]) -> f64,
    x: &[f64],
    _y: &[f64],
    p: Vec<f64>,
    cost: f64,
    iterations: usize,
    jacobian: &dyn Fn(&[f64]) -> Vec<Vec<f64>>,
) -> Result<FitResult, FitFailure> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(FitFailure::new("parameters diverged"));
    }
    let n = p.len();
    let jac = jacobian(&p);
    let mut jtj = vec![vec![0.0; n]; n];
    for row in &jac {
        for a in 0..n {
            for b in 0..n {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    let dof = (x.len() - n) as f64;
    let s2 = cost / dof;
    let errors = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            solve(jtj.clone(), e).map_or(f64::NAN, |col| (col[k] * s2).sqrt())
        })
        .collect();
    Ok(FitResult {
        params: p,
        errors,
        residual_rms: (cost / x.len() as f64).sqrt(),
        iterations,
    })
}

/// `y = B + A sin^2(pi f t)`; params `[A, B, f]`.
pub fn rabi_model(t: f64, p: &[f64]) -> f64 {
    p[1] + p[0] * (std::f64::consts::PI * p[2] * t).sin().powi(2)
}

/// `y = B + A exp(-(t / T)^2)`; params `[A, B, T]`.
pub fn gaussian_decay(t: f64, p: &[f64]) -> f64 {
    p[1] + p[0] * (-(t / p[2]).powi(2)).exp()
}

/// `y = B + A exp(-t / T)`; params `[A, B, T]`.
pub fn exponential_decay(t: f64, p: &[f64]) -> f64 {
    p[1] + p[0] * (-t / p[2]).exp()
}

/// Rabi fit. The frequency guess is the best of a grid scan of
/// `sin^2(pi f t)` correlation; A and B start at the data range.
pub fn fit_rabi(t: &[f64], y: &[f64]) -> Result<FitResult, FitFailure> {
    let (lo, hi) = range(y);
    let span = t.last().copied().unwrap_or(0.0) - t.first().copied().unwrap_or(0.0);
    if span <= 0.0 {
        return Err(FitFailure::new("empty time axis"));
    }
    let dt = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let f_max = 0.5 / dt;
    let f_min = 0.25 / span;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut best = (f_min, f64::NEG_INFINITY);
    let steps = 2000;
    for k in 0..=steps {
        let f = f_min * (f_max / f_min).powf(k as f64 / steps as f64);
        let c: f64 = t
            .iter()
            .zip(y)
            .map(|(&ti, &yi)| (yi - mean) * ((std::f64::consts::PI * f * ti).sin().powi(2) - 0.5))
            .sum();
        if c > best.1 {
            best = (f, c);
        }
    }
    levenberg_marquardt(&rabi_model, t, y, &[hi - lo, lo, best.0])
}

/// Decay fit for either model. Starting guesses: B from the last point,
/// A from the first minus the last, T where the data crosses `B + A/e`.
pub fn fit_decay(model: &dyn Fn(f64, &[f64]) -> f64, t: &[f64], y: &[f64]) -> Result<FitResult, FitFailure> {
    let b = *y.last().ok_or_else(|| FitFailure::new("no data"))?;
    let a = y[0] - b;
    if a == 0.0 {
        return Err(FitFailure::new("no visible decay"));
    }
    let target = b + a / std::f64::consts::E;
    let t0 = t
        .iter()
        .zip(y)
        .find(|(_, &yi)| (yi - target) * a.signum() <= 0.0)
        .map_or(t[t.len() / 2], |(&ti, _)| ti)
        .max(t[1] - t[0]);
    let fit = levenberg_marquardt(model, t, y, &[a, b, t0])?;
    if fit.params[2] <= 0.0 {
        return Err(FitFailure::new("non-positive decay time"));
    }
    Ok(fit)
}

fn range(y: &[f64]) -> (f64, f64) {
    y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
}
