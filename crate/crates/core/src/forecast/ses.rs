//! Simple exponential smoothing.

use super::{minimize_unit_box, sum_squares, ModelParams, SeriesModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SesParams {
    pub alpha: f64,
    /// Level after the last observation.
    pub level: f64,
}

impl SesParams {
    pub fn predict(&self, horizon: usize) -> Vec<f64> {
        vec![self.level; horizon]
    }
}

/// Runs the recursion from `level₀ = y₀`, returning the final level and the
/// one-step errors for `t ≥ 1`.
fn filter(y: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let mut level = y[0];
    let mut errors = Vec::with_capacity(y.len() - 1);
    for &v in &y[1..] {
        let e = v - level;
        errors.push(e);
        level += alpha * e;
    }
    (level, errors)
}

pub(super) fn fit(y: &[f64]) -> Result<SeriesModel> {
    if y.len() < 3 {
        return Err(Error::SeriesTooShort(format!(
            "SES needs 3 observations, got {}",
            y.len()
        )));
    }
    let [alpha] = minimize_unit_box::<1>(0.01, |p| sum_squares(&filter(y, p[0]).1));
    let (level, insample_errors) = filter(y, alpha);
    Ok(SeriesModel {
        params: ModelParams::Ses(SesParams { alpha, level }),
        season_length: None,
        insample_errors,
        warmup: 1,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let m = fit(&[4.2; 20]).unwrap();
        assert_eq!(m.predict(5), vec![4.2; 5]);
        assert!(m.insample_errors.iter().all(|&e| e == 0.0));
        assert_eq!(m.insample_errors.len(), 19);
    }

    #[test]
    fn random_walk_prefers_large_alpha() {
        let y: Vec<f64> = (0..60).map(|t| (t as f64 * 0.7).sin() * 0.1 + t as f64).collect();
        let m = fit(&y).unwrap();
        let ModelParams::Ses(p) = &m.params else { unreachable!() };
        assert!(p.alpha > 0.9);
    }

    #[test]
    fn too_short() {
        assert!(fit(&[1.0, 2.0]).is_err());
    }
}
