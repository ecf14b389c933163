//! Small univariate base-forecast models: simple exponential smoothing,
//! additive Holt–Winters and autoregression fitted by least squares.
//!
//! Smoothing parameters are chosen by minimizing the in-sample sum of
//! squared one-step errors (coarse grid, then pattern search); AR orders
//! by AIC. The in-sample one-step errors are kept on the model for weight
//! estimation and metric scaling.

mod ar;
mod holt_winters;
mod ses;

pub use ar::{fit_ar, ArParams, MAX_AR_ORDER};
pub use holt_winters::HoltWintersParams;
pub use ses::SesParams;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ses,
    HoltWinters,
    /// AR(p ≤ 3) with intercept; applied to seasonally differenced data when
    /// a season length is given.
    Ar,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ses => "ses",
            ModelKind::HoltWinters => "holt_winters",
            ModelKind::Ar => "ar",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ses" => Ok(ModelKind::Ses),
            "holt_winters" | "hw" => Ok(ModelKind::HoltWinters),
            "ar" => Ok(ModelKind::Ar),
            _ => Err(Error::InvalidConfig(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Ses(SesParams),
    HoltWinters(HoltWintersParams),
    Ar(ArParams),
}

/// A fitted model with its terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesModel {
    pub params: ModelParams,
    pub season_length: Option<usize>,
    /// One-step in-sample errors `y_t − ŷ_{t|t−1}` for `t ≥ warmup`.
    pub insample_errors: Vec<f64>,
    /// Number of leading observations without a one-step error.
    pub warmup: usize,
    pub warnings: Vec<String>,
}

impl SeriesModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Ses(_) => ModelKind::Ses,
            ModelParams::HoltWinters(_) => ModelKind::HoltWinters,
            ModelParams::Ar(_) => ModelKind::Ar,
        }
    }

    /// Recursive forecasts for horizons `1..=horizon`.
    pub fn predict(&self, horizon: usize) -> Vec<f64> {
        match &self.params {
            ModelParams::Ses(p) => p.predict(horizon),
            ModelParams::HoltWinters(p) => p.predict(horizon),
            ModelParams::Ar(p) => p.predict(horizon),
        }
    }
}

/// Fits a model of the given kind.
///
/// `season_length` is required for Holt–Winters; for AR it switches on
/// seasonal differencing.
pub fn fit(kind: ModelKind, series: &[f64], season_length: Option<usize>) -> Result<SeriesModel> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series to fit".into()));
    }
    match kind {
        ModelKind::Ses => ses::fit(series),
        ModelKind::HoltWinters => {
            let l =
                season_length.ok_or_else(|| Error::InvalidConfig("Holt–Winters requires a season length".into()))?;
            holt_winters::fit(series, l)
        }
        ModelKind::Ar => ar::fit_ar(series, MAX_AR_ORDER, season_length),
    }
}

/// Minimizes `f` over `[0, 1]^D`: grid search with spacing `grid`, then a
/// pattern search around the best grid point with halving steps.
pub(crate) fn minimize_unit_box<const D: usize>(grid: f64, f: impl Fn(&[f64; D]) -> f64) -> [f64; D] {
    let steps = (1.0 / grid).round() as usize;
    let mut best = [0.0; D];
    let mut best_val = f64::INFINITY;
    let total = (steps + 1).pow(D as u32);
    for code in 0..total {
        let mut x = [0.0; D];
        let mut c = code;
        for xi in x.iter_mut() {
            *xi = (c % (steps + 1)) as f64 * grid;
            c /= steps + 1;
        }
        let v = f(&x);
        if v < best_val {
            best_val = v;
            best = x;
        }
    }
    let mut step = grid / 2.0;
    while step > 1e-4 {
        let mut improved = false;
        for d in 0..D {
            for sign in [-1.0, 1.0] {
                let mut x = best;
                x[d] = (x[d] + sign * step).clamp(0.0, 1.0);
                let v = f(&x);
                if v < best_val {
                    best_val = v;
                    best = x;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best
}

fn sum_squares(e: &[f64]) -> f64 {
    e.iter().map(|x| x * x).sum()
}
