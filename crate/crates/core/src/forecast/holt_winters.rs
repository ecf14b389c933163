//! Additive Holt–Winters (level, trend, seasonal).

use super::{minimize_unit_box, sum_squares, ModelParams, SeriesModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub level: f64,
    pub trend: f64,
    /// Seasonal states indexed by `t mod L`.
    pub seasonal: Vec<f64>,
    /// Number of observations the state has absorbed.
    pub n_obs: usize,
}

impl HoltWintersParams {
    pub fn predict(&self, horizon: usize) -> Vec<f64> {
        let l = self.seasonal.len();
        (1..=horizon)
            .map(|h| self.level + h as f64 * self.trend + self.seasonal[(self.n_obs - 1 + h) % l])
            .collect()
    }
}

struct State {
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
}

/// Level at the centre of the first season, trend from the first two
/// seasonal means, seasonal deviations from the detrended first season.
fn initial_state(y: &[f64], l: usize) -> State {
    let lf = l as f64;
    let m1 = y[..l].iter().sum::<f64>() / lf;
    let m2 = y[l..2 * l].iter().sum::<f64>() / lf;
    let trend = (m2 - m1) / lf;
    let centre = (lf - 1.0) / 2.0;
    let mut seasonal: Vec<f64> = (0..l).map(|i| y[i] - (m1 + (i as f64 - centre) * trend)).collect();
    let mean = seasonal.iter().sum::<f64>() / lf;
    seasonal.iter_mut().for_each(|s| *s -= mean);
    State {
        level: m1 + centre * trend,
        trend,
        seasonal,
    }
}

/// Runs the recursion from the end of the first season.
fn filter(y: &[f64], l: usize, p: &[f64; 3]) -> (State, Vec<f64>) {
    let [alpha, beta, gamma] = *p;
    let mut s = initial_state(y, l);
    let mut errors = Vec::with_capacity(y.len() - l);
    for (t, &v) in y.iter().enumerate().skip(l) {
        let k = t % l;
        let fitted = s.level + s.trend + s.seasonal[k];
        errors.push(v - fitted);
        let level = alpha * (v - s.seasonal[k]) + (1.0 - alpha) * (s.level + s.trend);
        s.trend = beta * (level - s.level) + (1.0 - beta) * s.trend;
        s.seasonal[k] = gamma * (v - level) + (1.0 - gamma) * s.seasonal[k];
        s.level = level;
    }
    (s, errors)
}

pub(super) fn fit(y: &[f64], l: usize) -> Result<SeriesModel> {
    if l < 2 {
        return Err(Error::InvalidConfig(format!(
            "season length must be at least 2, got {l}"
        )));
    }
    if y.len() < 2 * l {
        return Err(Error::SeriesTooShort(format!(
            "Holt–Winters with season {l} needs {} observations, got {}",
            2 * l,
            y.len()
        )));
    }
    let p = minimize_unit_box::<3>(0.1, |p| sum_squares(&filter(y, l, p).1));
    let (state, insample_errors) = filter(y, l, &p);
    Ok(SeriesModel {
        params: ModelParams::HoltWinters(HoltWintersParams {
            alpha: p[0],
            beta: p[1],
            gamma: p[2],
            level: state.level,
            trend: state.trend,
            seasonal: state.seasonal,
            n_obs: y.len(),
        }),
        season_length: Some(l),
        insample_errors,
        warmup: l,
        warnings: Vec::new(),
    })
}
