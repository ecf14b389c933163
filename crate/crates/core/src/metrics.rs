//! Point-forecast accuracy metrics and per-level summaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(Error::dims(
            format!("{} forecasts", actual.len()),
            forecast.len().to_string(),
        ));
    }
    if actual.is_empty() {
        return Err(Error::InvalidConfig("metrics need at least one horizon".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    let sse: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).powi(2)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    Ok(actual.iter().zip(forecast).map(|(a, f)| (a - f).abs()).sum::<f64>() / actual.len() as f64)
}

/// Mean absolute scaled error: MAE divided by the in-sample MAE of the
/// seasonal naive forecast with lag `m`. Returns `+∞` when the in-sample
/// scale is zero.
pub fn mase(actual: &[f64], forecast: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    check_lengths(actual, forecast)?;
    if m == 0 || insample.len() <= m {
        return Err(Error::SeriesTooShort(format!(
            "MASE with lag {m} needs more than {m} in-sample observations, got {}",
            insample.len()
        )));
    }
    let scale = insample.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / (insample.len() - m) as f64;
    let err = mae(actual, forecast)?;
    if scale == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(err / scale)
}

/// Metric values per series, averaged per level and overall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub per_series: BTreeMap<String, f64>,
    /// Level name → mean of the finite per-series values in that level.
    pub per_level: BTreeMap<String, f64>,
    /// Mean of the level averages.
    pub overall: f64,
    /// Series with a non-finite value, left out of the averages.
    pub excluded: Vec<String>,
}

impl AccuracyReport {
    /// Aggregates per-series values (in hierarchy order) by level.
    pub fn from_values(h: &Hierarchy, values: &[f64]) -> Result<Self> {
        if values.len() != h.n() {
            return Err(Error::dims(format!("{} values", h.n()), values.len().to_string()));
        }
        let mut per_series = BTreeMap::new();
        let mut sums = vec![(0.0, 0usize); h.level_names().len()];
        let mut excluded = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let label = h.labels()[i].clone();
            if v.is_finite() {
                let slot = &mut sums[h.levels()[i]];
                slot.0 += v;
                slot.1 += 1;
            } else {
                excluded.push(label.clone());
            }
            per_series.insert(label, v);
        }
        let mut per_level = BTreeMap::new();
        let mut level_means = Vec::new();
        for (name, (sum, count)) in h.level_names().iter().zip(sums) {
            if count > 0 {
                let mean = sum / count as f64;
                per_level.insert(name.clone(), mean);
                level_means.push(mean);
            }
        }
        let overall = if level_means.is_empty() {
            f64::NAN
        } else {
            level_means.iter().sum::<f64>() / level_means.len() as f64
        };
        Ok(Self {
            per_series,
            per_level,
            overall,
            excluded,
        })
    }

    /// Level averages in level-index order.
    pub fn level_values(&self, h: &Hierarchy) -> Vec<f64> {
        h.level_names()
            .iter()
            .map(|n| self.per_level.get(n).copied().unwrap_or(f64::NAN))
            .collect()
    }
}
