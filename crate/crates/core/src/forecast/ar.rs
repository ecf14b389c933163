//! Autoregression with intercept, optionally on seasonally differenced
//! data.

use nalgebra::{DMatrix, DVector};

use super::{ses, ModelParams, SeriesModel};
use crate::error::{Error, Result};

/// Largest order considered by AIC selection.
pub const MAX_AR_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ArParams {
    pub intercept: f64,
    /// `φ₁, …, φ_p`.
    pub phi: Vec<f64>,
    /// Seasonal differencing lag, if the model was fitted to `y_t − y_{t−L}`.
    pub seasonal_lag: Option<usize>,
    /// Most recent values of the modelled (possibly differenced) series,
    /// oldest first; at least `p` entries.
    pub recent: Vec<f64>,
    /// Most recent `L` raw observations (only with differencing).
    pub recent_raw: Vec<f64>,
}

impl ArParams {
    /// A non-differenced AR model with the given state.
    pub fn new(intercept: f64, phi: Vec<f64>, recent: Vec<f64>) -> Result<Self> {
        if recent.len() < phi.len() {
            return Err(Error::SeriesTooShort(format!(
                "AR({}) needs {} recent values, got {}",
                phi.len(),
                phi.len(),
                recent.len()
            )));
        }
        Ok(Self {
            intercept,
            phi,
            seasonal_lag: None,
            recent,
            recent_raw: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// True when every root of the AR polynomial lies outside the unit
    /// circle.
    pub fn is_stationary(&self) -> bool {
        let p = self.phi.len();
        if p == 0 {
            return true;
        }
        let companion = DMatrix::from_fn(p, p, |i, j| {
            if i == 0 {
                self.phi[j]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
    }

    pub fn predict(&self, horizon: usize) -> Vec<f64> {
        let p = self.phi.len();
        let mut x: Vec<f64> = self.recent[self.recent.len() - p..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let next = self.intercept + (0..p).map(|i| self.phi[i] * x[x.len() - 1 - i]).sum::<f64>();
            x.push(next);
            out.push(next);
        }
        if let Some(l) = self.seasonal_lag {
            let mut raw = self.recent_raw.clone();
            for v in out.iter_mut() {
                *v += raw[raw.len() - l];
                raw.push(*v);
            }
        }
        out
    }
}

/// Least-squares fit of AR(p) with intercept to `x[start..]`, regressing on
/// lags `1..=p`. Returns `(intercept, φ, residuals)`.
fn ols(x: &[f64], p: usize, start: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let rows = x.len() - start;
    let design = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { x[start + r - c] });
    let target = DVector::from_fn(rows, |r, _| x[start + r]);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .expect("SVD solve with computed U and V");
    let resid = &target - &design * &coef;
    (
        coef[0],
        coef.iter().skip(1).copied().collect(),
        resid.iter().copied().collect(),
    )
}

/// Fits AR(p), `p ≤ max_order` chosen by AIC on a common estimation
/// sample, to `y` or to its lag-`L` seasonal difference.
///
/// A constant (differenced) series carries no autoregressive signal; the
/// fit then falls back to simple exponential smoothing on `y` with a
/// warning.
pub fn fit_ar(y: &[f64], max_order: usize, seasonal_lag: Option<usize>) -> Result<SeriesModel> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series to fit".into()));
    }
    let offset = seasonal_lag.unwrap_or(0);
    if seasonal_lag == Some(0) {
        return Err(Error::InvalidConfig("seasonal lag must be positive".into()));
    }
    if y.len() < offset + 2 {
        return Err(Error::SeriesTooShort(format!(
            "AR needs at least {} observations, got {}",
            offset + 2,
            y.len()
        )));
    }
    let x: Vec<f64> = match seasonal_lag {
        Some(l) => (l..y.len()).map(|t| y[t] - y[t - l]).collect(),
        None => y.to_vec(),
    };
    let constant = x.iter().all(|&v| v == x[0]);
    if constant {
        let mut m = ses::fit(y)?;
        m.warnings
            .push("series has no variation for an AR fit; using simple exponential smoothing".into());
        return Ok(m);
    }
    // Largest order that leaves at least p + 2 observations to estimate.
    let pmax = (0..=max_order).rev().find(|&p| x.len() >= 2 * p + 2).unwrap_or(0);
    let n_eff = (x.len() - pmax) as f64;
    let mut best: Option<(f64, f64, Vec<f64>, Vec<f64>)> = None;
    for p in 0..=pmax {
        let (c, phi, resid) = ols(&x, p, pmax);
        let sse: f64 = resid.iter().map(|e| e * e).sum();
        let aic = n_eff * (sse.max(f64::MIN_POSITIVE) / n_eff).ln() + 2.0 * (p + 1) as f64;
        if best.as_ref().is_none_or(|b| aic < b.0) {
            best = Some((aic, c, phi, resid));
        }
    }
    let (_, intercept, phi, insample_errors) = best.expect("order 0 is always fitted");
    let keep = phi.len().max(1);
    let params = ArParams {
        intercept,
        recent: x[x.len() - keep..].to_vec(),
        recent_raw: match seasonal_lag {
            Some(l) => y[y.len() - l..].to_vec(),
            None => Vec::new(),
        },
        phi,
        seasonal_lag,
    };
    let mut warnings = Vec::new();
    if !params.is_stationary() {
        warnings.push(format!("fitted AR({}) is not stationary", params.order()));
    }
    Ok(SeriesModel {
        params: ModelParams::Ar(params),
        season_length: seasonal_lag,
        insample_errors,
        warmup: offset + pmax,
        warnings,
    })
}
