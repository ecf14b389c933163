//! `recon`: reconcile forecast files, check candidate bases, and run the
//! simulation experiments.
//!
//! Exit codes: 0 success, 1 invalid basis, 2 invalid input, 3 solver
//! failure. Logging is controlled by `RECON_LOG` (`quiet`, `info`,
//! `debug`); warnings are shown by default.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn, LevelFilter};
use recon_core::covariance::{estimate, WeightKind};
use recon_core::hierarchy::BasisCheck;
use recon_core::io::{read_errors, read_forecasts, read_hierarchy, write_forecasts};
use recon_core::reconcile::{g_matrix_check, reconcile_immutable, reconcile_unconstrained};
use recon_core::simulate::{run_experiment, Plan, Scenario, SimulationConfig};
use recon_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "recon",
    version,
    about = "Hierarchical forecast reconciliation with immutable series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconcile base forecasts and write coherent forecasts.
    Reconcile {
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        forecasts: PathBuf,
        /// In-sample one-step errors (required for wls_v and mint_shrink).
        #[arg(long)]
        errors: Option<PathBuf>,
        #[arg(long, default_value = "ols", value_parser = parse_weight)]
        weights: WeightKind,
        /// Comma-separated labels whose forecasts stay unchanged.
        #[arg(long)]
        immutable: Option<String>,
        /// Keep mutable basis forecasts non-negative.
        #[arg(long)]
        nonneg: bool,
        /// Output CSV; diagnostics go to `<out stem>.diagnostics.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check whether a set of series can serve as a basis.
    ValidateBasis {
        #[arg(long)]
        hierarchy: PathBuf,
        /// Comma-separated candidate labels.
        #[arg(long)]
        basis: String,
    },
    /// Run a replicated simulation experiment.
    Simulate {
        #[arg(long, default_value = "one", value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long, default_value_t = 100)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "ets", value_parser = parse_plan)]
        plan: Plan,
        /// Comma-separated weight kinds (default: all four).
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value = "Total")]
        immutable: String,
        /// Results CSV; the run log goes to `<out stem>.log.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_weight(s: &str) -> Result<WeightKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_plan(s: &str) -> Result<Plan, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::RankDeficient { .. }
            | Error::NotPositiveDefinite(_)
            | Error::IterationCap { .. }
            | Error::NoKktPoint
            | Error::TooManyBounded { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn split_labels(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconcile(
    hierarchy: &Path,
    forecasts: &Path,
    errors: Option<&Path>,
    weights: WeightKind,
    immutable: Option<&str>,
    nonneg: bool,
    out: &Path,
) -> Result<(), Failure> {
    let h = read_hierarchy(hierarchy)?;
    let panel = read_forecasts(forecasts)?;
    let sample = match errors {
        Some(p) => Some(read_errors(p, &h)?),
        None if weights.needs_errors() => {
            return Err(invalid(format!("--weights {weights} requires --errors")));
        }
        None => None,
    };
    let wm = estimate(weights, &h, sample.as_ref())?;
    let result = match immutable {
        Some(list) => reconcile_immutable(&h, &split_labels(list), &wm, &panel, nonneg)?,
        None if nonneg => reconcile_immutable::<String>(&h, &[], &wm, &panel, true)?,
        None => reconcile_unconstrained(&h, &wm, &panel)?,
    };
    for w in &result.diagnostics.warnings {
        warn!("{w}");
    }

    // Rows back in input order.
    let rows: Vec<usize> = panel
        .labels()
        .iter()
        .map(|l| h.index_of(l).expect("panel was aligned with the hierarchy"))
        .collect();
    let values = recon_core::linalg::select_rows(&result.reconciled, &rows);
    write_forecasts(create(out)?, panel.labels(), &values)?;

    let gs = g_matrix_check(&result, &h)?;
    let diag = json!({
        "coherence_residual": result.coherence_residual,
        "immutability_residual": result.immutability_residual,
        "g_s_residual": gs,
        "basis": result.diagnostics.basis,
        "immutable": result.diagnostics.immutable,
        "determined": result.diagnostics.determined,
        "weight_kind": result.diagnostics.weight_kind,
        "shrink_lambda": result.diagnostics.shrink_lambda,
        "jitter": result.diagnostics.jitter,
        "active_sets": result.diagnostics.active_sets,
        "kkt_residuals": result.diagnostics.kkt_residuals,
        "warnings": result.diagnostics.warnings,
    });
    let diag_path = sibling(out, "diagnostics.json");
    serde_json::to_writer_pretty(create(&diag_path)?, &diag).map_err(Error::from)?;
    info!(
        "reconciled {} series over {} horizons; coherence residual {:.3e}",
        h.n(),
        panel.horizons(),
        result.coherence_residual
    );
    Ok(())
}

fn cmd_validate_basis(hierarchy: &Path, basis: &str) -> Result<bool, Failure> {
    let h = read_hierarchy(hierarchy)?;
    let labels = split_labels(basis);
    let idx = h.indices_of(&labels)?;
    match h.check_basis(&idx)? {
        BasisCheck::Valid => {
            println!("valid: {{{}}} is a basis", labels.join(", "));
            Ok(true)
        }
        BasisCheck::Invalid { rank, ratio, witness } => {
            println!("invalid: rank {rank} < {} (singular value ratio {ratio:.3e})", h.m());
            let terms: Vec<String> = h
                .basis_labels()
                .iter()
                .zip(witness.iter())
                .filter(|(_, &c)| c != 0.0)
                .map(|(l, c)| format!("{c:+}·{l}"))
                .collect();
            println!(
                "witness: moving the current basis along {} leaves every candidate unchanged",
                terms.join(" ")
            );
            Ok(false)
        }
    }
}

fn cmd_simulate(
    scenario: Scenario,
    replications: usize,
    seed: u64,
    plan: Plan,
    weights: Option<&str>,
    immutable: &str,
    out: &Path,
) -> Result<(), Failure> {
    let kinds: Vec<WeightKind> = match weights {
        Some(list) => split_labels(list)
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, Error>>()?,
        None => WeightKind::ALL.to_vec(),
    };
    let cfg = SimulationConfig {
        scenario,
        replications,
        seed,
        ..SimulationConfig::default()
    };
    let result = run_experiment(&cfg, plan, &kinds, &split_labels(immutable))?;
    for rec in &result.records {
        if let recon_core::simulate::ReplicationOutcome::Failed(e) = &rec.outcome {
            warn!("replication {} dropped: {e}", rec.replication);
        }
    }
    result.table.write_csv(create(out)?)?;
    result.write_log(create(&sibling(out, "log.jsonl"))?)?;
    info!(
        "{} of {} replications succeeded",
        result.successes(),
        result.records.len()
    );
    Ok(())
}

fn init_logging() {
    let level = match std::env::var("RECON_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Off,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Reconcile {
            hierarchy,
            forecasts,
            errors,
            weights,
            immutable,
            nonneg,
            out,
        } => cmd_reconcile(
            hierarchy,
            forecasts,
            errors.as_deref(),
            *weights,
            immutable.as_deref(),
            *nonneg,
            out,
        )
        .map(|()| 0),
        Command::ValidateBasis { hierarchy, basis } => {
            cmd_validate_basis(hierarchy, basis).map(|valid| if valid { 0 } else { 1 })
        }
        Command::Simulate {
            scenario,
            replications,
            seed,
            plan,
            weights,
            immutable,
            out,
        } => cmd_simulate(
            *scenario,
            *replications,
            *seed,
            *plan,
            weights.as_deref(),
            immutable,
            out,
        )
        .map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
