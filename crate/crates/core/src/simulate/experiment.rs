//! Replicated simulate → forecast → reconcile → score experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{generate, SimulationConfig};
use crate::covariance::{estimate, ErrorSample, WeightKind};
use crate::error::{Error, Result};
use crate::forecast::{fit, ModelKind};
use crate::hierarchy::Hierarchy;
use crate::metrics::{rmse, AccuracyReport};
use crate::reconcile::{reconcile_immutable, reconcile_unconstrained, ForecastPanel};

/// Which base model each level uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plan {
    /// Holt–Winters for every series.
    Ets,
    /// Holt–Winters for the top level, seasonal-difference AR elsewhere.
    EtsArima,
}

impl Plan {
    pub fn name(self) -> &'static str {
        match self {
            Plan::Ets => "ets",
            Plan::EtsArima => "ets-arima",
        }
    }

    pub fn model_for_level(self, level: usize) -> ModelKind {
        match (self, level) {
            (Plan::Ets, _) | (Plan::EtsArima, 0) => ModelKind::HoltWinters,
            (Plan::EtsArima, _) => ModelKind::Ar,
        }
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Plan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ets" => Ok(Plan::Ets),
            "ets-arima" | "ets_arima" => Ok(Plan::EtsArima),
            _ => Err(Error::InvalidConfig(format!(
                "unknown plan `{s}` (expected `ets` or `ets-arima`)"
            ))),
        }
    }
}

/// A table column: base forecasts, or a weight kind reconciled with (`C`)
/// or without (`U`) the immutable constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKey {
    Base,
    Unconstrained(WeightKind),
    Constrained(WeightKind),
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKey::Base => f.write_str("Base"),
            CellKey::Unconstrained(k) => write!(f, "{k}_U"),
            CellKey::Constrained(k) => write!(f, "{k}_C"),
        }
    }
}

/// Per-level RMSE of one cell in one replication, plus the level average.
pub type LevelScores = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationOutcome {
    Ok(BTreeMap<CellKey, LevelScores>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub outcome: ReplicationOutcome,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    replication: usize,
    seed: u64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse: Option<BTreeMap<String, &'a LevelScores>>,
    warnings: &'a [String],
}

/// Mean per-level RMSE over successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    /// Row names: level names, then `Average`.
    pub rows: Vec<String>,
    pub columns: Vec<CellKey>,
    /// `rows × columns`.
    pub values: DMatrix<f64>,
}

impl ResultsTable {
    pub fn get(&self, row: &str, column: CellKey) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| *x == column)?;
        Some(self.values[(r, c)])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["Level".to_string()];
        header.extend(self.columns.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (r, name) in self.rows.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend((0..self.columns.len()).map(|c| format!("{:.6}", self.values[(r, c)])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub table: ResultsTable,
    pub records: Vec<ReplicationRecord>,
    pub plan: Plan,
    pub immutable: Vec<String>,
}

impl ExperimentResult {
    pub fn successes(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.outcome, ReplicationOutcome::Ok(_)))
            .count()
    }

    /// One JSON object per replication.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = match &r.outcome {
                ReplicationOutcome::Ok(cells) => LogLine {
                    replication: r.replication,
                    seed: r.seed,
                    status: "ok",
                    error: None,
                    rmse: Some(cells.iter().map(|(k, v)| (k.to_string(), v)).collect()),
                    warnings: &r.warnings,
                },
                ReplicationOutcome::Failed(e) => LogLine {
                    replication: r.replication,
                    seed: r.seed,
                    status: "failed",
                    error: Some(e),
                    rmse: None,
                    warnings: &r.warnings,
                },
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs `cfg.replications` independent replications (replication `r` is
/// seeded with `cfg.seed + r`) and averages per-level RMSE across the ones
/// that succeed. Failed replications are kept in the records and left out
/// of the averages.
pub fn run_experiment<S: AsRef<str> + Sync>(
    cfg: &SimulationConfig,
    plan: Plan,
    weight_kinds: &[WeightKind],
    immutable: &[S],
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.replications == 0 {
        return Err(Error::InvalidConfig("replications must be positive".into()));
    }
    let h = super::simulation_hierarchy();
    h.indices_of(immutable)?;
    let records: Vec<ReplicationRecord> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let mut warnings = Vec::new();
            let outcome = match replicate(cfg, plan, weight_kinds, immutable, seed, &h, &mut warnings) {
                Ok(cells) => ReplicationOutcome::Ok(cells),
                Err(e) => ReplicationOutcome::Failed(e.to_string()),
            };
            ReplicationRecord {
                replication: r,
                seed,
                outcome,
                warnings,
            }
        })
        .collect();

    let mut columns = vec![CellKey::Base];
    for &k in weight_kinds {
        columns.push(CellKey::Unconstrained(k));
        columns.push(CellKey::Constrained(k));
    }
    let mut rows: Vec<String> = h.level_names().to_vec();
    rows.push("Average".into());
    let mut values = DMatrix::zeros(rows.len(), columns.len());
    let mut count = 0usize;
    for rec in &records {
        if let ReplicationOutcome::Ok(cells) = &rec.outcome {
            count += 1;
            for (c, key) in columns.iter().enumerate() {
                for (r, v) in cells[key].iter().enumerate() {
                    values[(r, c)] += v;
                }
            }
        }
    }
    if count == 0 {
        values.fill(f64::NAN);
    } else {
        values /= count as f64;
    }
    Ok(ExperimentResult {
        table: ResultsTable { rows, columns, values },
        records,
        plan,
        immutable: immutable.iter().map(|s| s.as_ref().to_string()).collect(),
    })
}

fn level_scores(h: &Hierarchy, per_series: &[f64]) -> Result<LevelScores> {
    let report = AccuracyReport::from_values(h, per_series)?;
    let mut v = report.level_values(h);
    v.push(report.overall);
    Ok(v)
}

fn series_rmse(test: &DMatrix<f64>, fc: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..test.nrows())
        .map(|i| {
            let a: Vec<f64> = test.row(i).iter().copied().collect();
            let f: Vec<f64> = fc.row(i).iter().copied().collect();
            rmse(&a, &f)
        })
        .collect()
}

fn replicate<S: AsRef<str>>(
    cfg: &SimulationConfig,
    plan: Plan,
    weight_kinds: &[WeightKind],
    immutable: &[S],
    seed: u64,
    h: &Hierarchy,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<CellKey, LevelScores>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = generate(cfg, &mut rng)?;
    let n_train = cfg.t_total - cfg.horizon;
    let train = sim.data.columns(0, n_train);
    let test = sim.data.columns(n_train, cfg.horizon).into_owned();

    let mut base = DMatrix::zeros(h.n(), cfg.horizon);
    let mut errors = Vec::with_capacity(h.n());
    for i in 0..h.n() {
        let y: Vec<f64> = train.row(i).iter().copied().collect();
        let model = fit(plan.model_for_level(h.levels()[i]), &y, Some(cfg.season_length))?;
        for w in &model.warnings {
            warnings.push(format!("{}: {w}", h.labels()[i]));
        }
        let fc = model.predict(cfg.horizon);
        for (t, v) in fc.into_iter().enumerate() {
            base[(i, t)] = v;
        }
        errors.push(model.insample_errors.iter().map(|&e| Some(e)).collect::<Vec<_>>());
    }
    let sample = ErrorSample::from_series(&errors)?;
    let panel = ForecastPanel::for_hierarchy(h, base.clone())?;

    let mut cells = BTreeMap::new();
    cells.insert(CellKey::Base, level_scores(h, &series_rmse(&test, &base)?)?);
    for &kind in weight_kinds {
        let wm = estimate(kind, h, Some(&sample))?;
        let u = reconcile_unconstrained(h, &wm, &panel)?;
        cells.insert(
            CellKey::Unconstrained(kind),
            level_scores(h, &series_rmse(&test, &u.reconciled)?)?,
        );
        let c = reconcile_immutable(h, immutable, &wm, &panel, false)?;
        cells.insert(
            CellKey::Constrained(kind),
            level_scores(h, &series_rmse(&test, &c.reconciled)?)?,
        );
    }
    Ok(cells)
}
