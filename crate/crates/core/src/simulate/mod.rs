//! Simulated two-level hierarchies (Total → A, B → AA, AB, BA, BB) and a
//! replicated forecasting experiment over them.
//!
//! Bottom series follow a basic structural model: local linear trend plus a
//! dummy seasonal of period `l` plus contemporaneously correlated ARMA
//! noise. Scenario II adds two common white-noise terms with alternating
//! signs that cancel partially on aggregation.

mod dgp;
mod experiment;

pub use dgp::{generate, generate_scenario1, generate_scenario2, ArmaSpec, SimulatedPanel};
pub use experiment::{
    run_experiment, CellKey, ExperimentResult, Plan, ReplicationOutcome, ReplicationRecord, ResultsTable,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    One,
    Two,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::One => "one",
            Scenario::Two => "two",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "1" | "I" => Ok(Scenario::One),
            "two" | "2" | "II" => Ok(Scenario::Two),
            _ => Err(Error::InvalidConfig(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    /// Observations per series, including the test window.
    pub t_total: usize,
    pub horizon: usize,
    pub season_length: usize,
    pub sigma_e2: f64,
    pub sigma_eps2: f64,
    pub sigma_omega2: f64,
    /// Covariance of each initial state vector (`μ₀`, `v₀`, seasonal seeds).
    pub sigma0: DMatrix<f64>,
    /// Covariance of the ARMA innovations across the four bottom series.
    pub sigma1: DMatrix<f64>,
    /// AR and MA coefficients are drawn uniformly from this range.
    pub arma_coef_range: (f64, f64),
    /// Variances of the common Scenario II noise terms `v_t` and `ω_t`.
    pub scenario2_v_var: f64,
    pub scenario2_omega_var: f64,
    /// ARMA observations discarded before the kept sample.
    pub burn_in: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::One,
            t_total: 324,
            horizon: 24,
            season_length: 12,
            sigma_e2: 2.0,
            sigma_eps2: 0.007,
            sigma_omega2: 7.0,
            sigma0: DMatrix::identity(4, 4),
            sigma1: DMatrix::from_row_slice(
                4,
                4,
                &[3., -2., 0., 0., -2., 3., 0., 0., 0., 0., 3., -1., 0., 0., -1., 3.],
            ),
            arma_coef_range: (0.5, 0.7),
            scenario2_v_var: 10.0,
            scenario2_omega_var: 9.0,
            burn_in: 200,
            replications: 1000,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn scenario_two() -> Self {
        Self {
            scenario: Scenario::Two,
            ..Self::default()
        }
    }

    /// Every variance parameter set to zero.
    pub fn noiseless(scenario: Scenario) -> Self {
        Self {
            scenario,
            sigma_e2: 0.0,
            sigma_eps2: 0.0,
            sigma_omega2: 0.0,
            sigma0: DMatrix::zeros(4, 4),
            sigma1: DMatrix::zeros(4, 4),
            scenario2_v_var: 0.0,
            scenario2_omega_var: 0.0,
            ..Self::default()
        }
    }

    /// Checks dimensions and ranges. Zero variances are accepted so that
    /// degenerate configurations can be simulated.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("sigma_e2", self.sigma_e2),
            ("sigma_eps2", self.sigma_eps2),
            ("sigma_omega2", self.sigma_omega2),
            ("scenario2_v_var", self.scenario2_v_var),
            ("scenario2_omega_var", self.scenario2_omega_var),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative finite number, got {v}"));
            }
        }
        for (name, m) in [("sigma0", &self.sigma0), ("sigma1", &self.sigma1)] {
            if m.shape() != (4, 4) {
                return bad(format!("{name} must be 4x4"));
            }
            if crate::linalg::asymmetry(m) > 1e-12 || crate::linalg::min_eigenvalue(m) < -1e-12 {
                return bad(format!("{name} must be symmetric positive semi-definite"));
            }
        }
        let (lo, hi) = self.arma_coef_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("invalid ARMA coefficient range ({lo}, {hi})"));
        }
        if self.season_length < 2 {
            return bad("season length must be at least 2".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.t_total <= self.horizon + 2 * self.season_length {
            return bad(format!(
                "t_total {} must exceed horizon + 2·season_length = {}",
                self.t_total,
                self.horizon + 2 * self.season_length
            ));
        }
        Ok(())
    }
}

/// The seven-series hierarchy used by the simulations, in the order
/// `Total, A, B, AA, AB, BA, BB`.
pub fn simulation_hierarchy() -> Hierarchy {
    Hierarchy::from_edges(&[
        ("Total", "A"),
        ("Total", "B"),
        ("A", "AA"),
        ("A", "AB"),
        ("B", "BA"),
        ("B", "BB"),
    ])
    .expect("fixed hierarchy is valid")
}
