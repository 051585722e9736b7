//! ARIMA(1,0,1) with intercept, fitted by conditional sum of squares.
//!
//! Parameterization: `y_t = c + φ y_{t-1} + e_t + ϑ e_{t-1}`. Residuals are
//! computed from `t = 1` with `e_0 = 0`, conditioning on `y_0`. The residuals
//! are linear in `c` for fixed `(φ, ϑ)`, so `c` is concentrated out in closed
//! form and Nelder–Mead searches `(atanh φ, atanh ϑ)`, which keeps the fit
//! stationary and invertible. The one-step forecast is `c + φ y_T + ϑ e_T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fits whose |φ| or |ϑ| end up above this are treated as stuck on the boundary.
pub const BOUNDARY: f64 = 0.995;

pub const MIN_FIT_LEN: usize = 10;

/// `|φ + ϑ|` below this means the AR and MA roots nearly cancel.
pub const CANCELLATION_TOL: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArimaError {
    #[error("series has {0} values; at least {MIN_FIT_LEN} are needed")]
    TooShort(usize),
    #[error("series contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Css,
    /// Least-squares AR(1), used when the CSS search failed or hit the boundary.
    Ar1Fallback,
    /// The series has no variation.
    Constant,
    /// The AR and MA factors nearly cancel, leaving the pair unidentified;
    /// refit as AR(1) by least squares.
    CommonFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub ar: f64,
    pub ma: f64,
    pub intercept: f64,
    /// Residual variance.
    pub sigma2: f64,
    /// Conditional sum of squares at the optimum.
    pub css: f64,
    pub n_obs: usize,
    pub method: FitMethod,
    pub evaluations: usize,
}

impl ArimaModel {
    /// Unconditional mean `c / (1 - φ)`.
    pub fn mean(&self) -> f64 {
        self.intercept / (1.0 - self.ar)
    }
}

/// `(c, sse)` for fixed `(φ, ϑ)`.
fn concentrated_css(y: &[f64], phi: f64, theta: f64) -> (f64, f64) {
    // e_t = u_t - c v_t
    let (mut u, mut v) = (0.0, 0.0);
    let (mut suv, mut svv) = (0.0, 0.0);
    let mut us = Vec::with_capacity(y.len());
    for t in 1..y.len() {
        u = y[t] - phi * y[t - 1] - theta * u;
        v = 1.0 - theta * v;
        suv += u * v;
        svv += v * v;
        us.push((u, v));
    }
    let c = suv / svv;
    let sse = us.iter().map(|(u, v)| (u - c * v).powi(2)).sum();
    (c, sse)
}

fn ar1_least_squares(y: &[f64]) -> (f64, f64, f64) {
    let m = (y.len() - 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for t in 1..y.len() {
        let (x, z) = (y[t - 1], y[t]);
        sx += x;
        sy += z;
        sxx += x * x;
        sxy += x * z;
    }
    let var = sxx - sx * sx / m;
    let phi = if var > 0.0 { (sxy - sx * sy / m) / var } else { 0.0 };
    let c = (sy - phi * sx) / m;
    let sse = (1..y.len()).map(|t| (y[t] - c - phi * y[t - 1]).powi(2)).sum();
    (phi, c, sse)
}

pub fn fit_arima(series: &[f64]) -> Result<ArimaModel, ArimaError> {
    let n = series.len();
    if n < MIN_FIT_LEN {
        return Err(ArimaError::TooShort(n));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ArimaError::NonFinite);
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = series.iter().sum::<f64>() / n as f64;
    if hi - lo <= 1e-12 * (1.0 + mean.abs()) {
        return Ok(ArimaModel {
            ar: 0.0,
            ma: 0.0,
            intercept: mean,
            sigma2: 0.0,
            css: 0.0,
            n_obs: n,
            method: FitMethod::Constant,
            evaluations: 0,
        });
    }

    let (phi0, c0, sse0) = ar1_least_squares(series);
    let start = [phi0.clamp(-0.9, 0.9).atanh(), 0.0];
    let objective = |p: &[f64; 2]| concentrated_css(series, p[0].tanh(), p[1].tanh()).1;
    let (best, evaluations) = nelder_mead(objective, start, 0.2, 4000, 1e-12);
    let (phi, theta) = (best[0].tanh(), best[1].tanh());
    let (c, css) = concentrated_css(series, phi, theta);

    let stuck = phi.abs() > BOUNDARY || theta.abs() > BOUNDARY;
    if stuck || !css.is_finite() || !c.is_finite() {
        log::warn!(
            "ARIMA(1,0,1) CSS fit left the admissible region (phi={phi:.4}, theta={theta:.4}); \
             falling back to AR(1) least squares"
        );
        let phi = phi0.clamp(-BOUNDARY, BOUNDARY);
        return Ok(ArimaModel {
            ar: phi,
            ma: 0.0,
            intercept: c0,
            sigma2: sse0 / (n - 1) as f64,
            css: sse0,
            n_obs: n,
            method: FitMethod::Ar1Fallback,
            evaluations,
        });
    }
    // y_t = c + φ y_{t-1} + e_t - φ e_{t-1} is white noise around c / (1 - φ),
    // and along that ridge the sum of squares is nearly flat.
    if (phi + theta).abs() < CANCELLATION_TOL {
        return Ok(ArimaModel {
            ar: phi0.clamp(-BOUNDARY, BOUNDARY),
            ma: 0.0,
            intercept: c0,
            sigma2: sse0 / (n - 1) as f64,
            css: sse0,
            n_obs: n,
            method: FitMethod::CommonFactor,
            evaluations,
        });
    }
    Ok(ArimaModel {
        ar: phi,
        ma: theta,
        intercept: c,
        sigma2: css / (n - 1) as f64,
        css,
        n_obs: n,
        method: FitMethod::Css,
        evaluations,
    })
}

/// One-step-ahead forecast after `history`, replaying the residual
/// recursion from `e_0 = 0`.
pub fn forecast_arima(model: &ArimaModel, history: &[f64]) -> f64 {
    let Some((&first, rest)) = history.split_first() else {
        return model.mean();
    };
    let mut prev = first;
    let mut e = 0.0;
    for &y in rest {
        e = y - model.intercept - model.ar * prev - model.ma * e;
        prev = y;
    }
    model.intercept + model.ar * prev + model.ma * e
}

/// Minimizes `f` over R² from `start`; returns the best vertex and the
/// number of function evaluations.
fn nelder_mead(
    f: impl Fn(&[f64; 2]) -> f64,
    start: [f64; 2],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> ([f64; 2], usize) {
    let evals = std::cell::Cell::new(0);
    let eval = |p: [f64; 2]| {
        evals.set(evals.get() + 1);
        let v = f(&p);
        (p, if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut simplex = [
        eval(start),
        eval([start[0] + step, start[1]]),
        eval([start[0], start[1] + step]),
    ];
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[2].1);
        if evals.get() >= max_evals || (worst - best).abs() <= tol * (1.0 + best.abs()) {
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let reflected = eval(lerp(centroid, simplex[2].0, -1.0));
        if reflected.1 < simplex[0].1 {
            let expanded = eval(lerp(centroid, simplex[2].0, -2.0));
            simplex[2] = if expanded.1 < reflected.1 { expanded } else { reflected };
        } else if reflected.1 < simplex[1].1 {
            simplex[2] = reflected;
        } else {
            let contracted = if reflected.1 < simplex[2].1 {
                eval(lerp(centroid, reflected.0, 0.5))
            } else {
                eval(lerp(centroid, simplex[2].0, 0.5))
            };
            if contracted.1 < simplex[2].1.min(reflected.1) {
                simplex[2] = contracted;
            } else {
                let anchor = simplex[0].0;
                for k in 1..3 {
                    simplex[k] = eval(lerp(anchor, simplex[k].0, 0.5));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, evals.get())
}
