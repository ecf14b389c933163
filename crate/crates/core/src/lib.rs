//! Hierarchical forecast reconciliation with immutable series.
//!
//! Base forecasts of every series in a hierarchy are mapped to coherent
//! forecasts `ỹ = S·G·ŷ`. Any linearly independent subset of series can be
//! held fixed ("immutable"): the hierarchy is rebased so that those series
//! are part of the basis, and the remaining basis series are estimated by
//! generalized least squares, optionally under non-negativity bounds.
//!
//! Module map:
//! - [`hierarchy`]: structural matrices, basis checks, re-basing, partitions
//! - [`covariance`]: OLS / WLS / MinT-shrink weight estimators
//! - [`solver`]: GLS, bound-constrained GLS and an enumeration oracle
//! - [`reconcile`]: unconstrained and immutable reconciliation
//! - [`forecast`]: small base models (SES, Holt–Winters, AR)
//! - [`simulate`]: structural-model simulations and experiment runner
//! - [`metrics`]: RMSE, MASE and level summaries
//! - [`io`]: text and CSV file formats

pub mod covariance;
pub mod error;
pub mod forecast;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod reconcile;
pub mod simulate;
pub mod solver;

pub use covariance::{ErrorSample, WeightKind, WeightMatrix};
pub use error::{Error, Result};
pub use hierarchy::{BasisCheck, BasisSelection, Dimension, GroupSpec, Hierarchy};
pub use reconcile::{ForecastPanel, ReconciliationResult};
