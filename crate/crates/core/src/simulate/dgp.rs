//! Data-generating processes for the simulated hierarchies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::{simulation_hierarchy, Scenario, SimulationConfig};
use crate::error::Result;
use crate::hierarchy::Hierarchy;
use crate::linalg;

/// ARMA(p, q) orders and coefficients of one bottom series' noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaSpec {
    pub ar: Option<f64>,
    pub ma: Option<f64>,
}

/// A simulated panel with the components needed to check it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub hierarchy: Hierarchy,
    /// `7 × T`, rows in hierarchy order.
    pub data: DMatrix<f64>,
    /// `4 × T` Scenario I bottom series (`z` in Scenario II).
    pub z: DMatrix<f64>,
    /// `4 × T` ARMA innovations over the kept sample.
    pub innovations: DMatrix<f64>,
    /// `4 × T` ARMA noise over the kept sample.
    pub noise: DMatrix<f64>,
    pub arma: [ArmaSpec; 4],
}

fn std_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draws `N(0, F·Fᵀ)` given the factor `F`.
fn mvn<R: Rng + ?Sized>(rng: &mut R, factor: &DMatrix<f64>) -> DVector<f64> {
    factor * std_normal_vec(rng, factor.ncols())
}

/// Scenario I bottoms, ARMA innovations and ARMA noise.
fn bottoms<R: Rng + ?Sized>(
    cfg: &SimulationConfig,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, [ArmaSpec; 4]) {
    let t_len = cfg.t_total;
    let l = cfg.season_length;
    let f0 = linalg::psd_factor(&cfg.sigma0);
    let f1 = linalg::psd_factor(&cfg.sigma1);
    let (se, seps, somega) = (cfg.sigma_e2.sqrt(), cfg.sigma_eps2.sqrt(), cfg.sigma_omega2.sqrt());

    // Initial states: μ₀, v₀ and l seasonal seeds, each N(0, Σ₀).
    let mut mu = mvn(rng, &f0);
    let mut slope = mvn(rng, &f0);
    let mut seasonal: Vec<DVector<f64>> = (0..l).map(|_| mvn(rng, &f0)).collect();

    // ARMA orders and coefficients, independently per series.
    let coef = Uniform::new_inclusive(cfg.arma_coef_range.0, cfg.arma_coef_range.1).expect("validated range");
    let arma: [ArmaSpec; 4] = std::array::from_fn(|_| {
        let ar = rng.random_bool(0.5).then(|| coef.sample(rng));
        let ma = rng.random_bool(0.5).then(|| coef.sample(rng));
        ArmaSpec { ar, ma }
    });

    // ARMA noise with burn-in.
    let total = cfg.burn_in + t_len;
    let mut innovations = DMatrix::zeros(4, t_len);
    let mut noise = DMatrix::zeros(4, t_len);
    let mut prev_eta = DVector::zeros(4);
    let mut prev_u = DVector::zeros(4);
    for t in 0..total {
        let u = mvn(rng, &f1);
        let eta = DVector::from_fn(4, |i, _| {
            u[i] + arma[i].ar.map_or(0.0, |phi| phi * prev_eta[i]) + arma[i].ma.map_or(0.0, |th| th * prev_u[i])
        });
        if t >= cfg.burn_in {
            innovations.set_column(t - cfg.burn_in, &u);
            noise.set_column(t - cfg.burn_in, &eta);
        }
        prev_eta = eta;
        prev_u = u;
    }

    let mut z = DMatrix::zeros(4, t_len);
    for t in 0..t_len {
        let e = std_normal_vec(rng, 4) * se;
        let eps = std_normal_vec(rng, 4) * seps;
        let omega = std_normal_vec(rng, 4) * somega;
        slope += eps;
        mu += &slope + e;
        // s_t = −(s_{t−1} + … + s_{t−l+1}) + ω_t
        let recent = &seasonal[seasonal.len() - (l - 1)..];
        let s = -recent.iter().fold(DVector::zeros(4), |acc, v| acc + v) + omega;
        z.set_column(t, &(&mu + &s + noise.column(t)));
        seasonal.push(s);
        if seasonal.len() > l {
            seasonal.remove(0);
        }
    }
    (z, innovations, noise, arma)
}

/// Rows `Total, A, B, AA, AB, BA, BB`, with `A = AA + AB`, `B = BA + BB`,
/// `Total = A + B`.
fn aggregate(bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let t_len = bottom.ncols();
    let mut y = DMatrix::zeros(7, t_len);
    for t in 0..t_len {
        let a = bottom[(0, t)] + bottom[(1, t)];
        let b = bottom[(2, t)] + bottom[(3, t)];
        y[(0, t)] = a + b;
        y[(1, t)] = a;
        y[(2, t)] = b;
        for i in 0..4 {
            y[(3 + i, t)] = bottom[(i, t)];
        }
    }
    y
}

pub fn generate_scenario1<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let (z, innovations, noise, arma) = bottoms(cfg, rng);
    Ok(SimulatedPanel {
        hierarchy: simulation_hierarchy(),
        data: aggregate(&z),
        z,
        innovations,
        noise,
        arma,
    })
}

/// Scenario I bottoms `z` plus common noise:
/// `AA = z − v − ω/2`, `AB = z + v − ω/2`, `BA = z − v + ω/2`,
/// `BB = z + v − ω/2`, with `v_t`, `ω_t` drawn after all Scenario I draws.
pub fn generate_scenario2<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let (z, innovations, noise, arma) = bottoms(cfg, rng);
    let (sv, sw) = (cfg.scenario2_v_var.sqrt(), cfg.scenario2_omega_var.sqrt());
    let signs = [(-1.0, -0.5), (1.0, -0.5), (-1.0, 0.5), (1.0, -0.5)];
    let mut bottom = z.clone();
    for t in 0..cfg.t_total {
        let v: f64 = StandardNormal.sample(rng);
        let w: f64 = StandardNormal.sample(rng);
        let (v, w) = (v * sv, w * sw);
        for (i, (cv, cw)) in signs.iter().enumerate() {
            bottom[(i, t)] += cv * v + cw * w;
        }
    }
    Ok(SimulatedPanel {
        hierarchy: simulation_hierarchy(),
        data: aggregate(&bottom),
        z,
        innovations,
        noise,
        arma,
    })
}

pub fn generate<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<SimulatedPanel> {
    match cfg.scenario {
        Scenario::One => generate_scenario1(cfg, rng),
        Scenario::Two => generate_scenario2(cfg, rng),
    }
}
