//! Generalized least squares with optional non-negativity bounds.
//!
//! All problems have the form
//!
//! ```text
//! minimize (t − A·x)ᵀ W⁻¹ (t − A·x)   subject to x_i ≥ 0 for bounded i
//! ```
//!
//! where `W` is a covariance (symmetric positive definite). `W` is only ever
//! used through its Cholesky factor `L` (`W = L·Lᵀ`): the problem is
//! whitened to `‖L⁻¹t − L⁻¹A·x‖²` and solved with a QR factorization.

mod nnls;
mod oracle;

pub use nnls::solve_nnls;
pub use oracle::{count_kkt_patterns, oracle_enumerate, MAX_ORACLE_BOUNDED};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// Relative tolerance on stationarity, dual feasibility and complementarity.
pub const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GlsProblem {
    /// `p × q` design matrix with full column rank.
    pub design: DMatrix<f64>,
    /// Length-`p` target.
    pub target: DVector<f64>,
    /// `p × p` residual covariance; the objective uses its inverse.
    pub weight: DMatrix<f64>,
}

impl GlsProblem {
    pub fn new(design: DMatrix<f64>, target: DVector<f64>, weight: DMatrix<f64>) -> Result<Self> {
        let p = design.nrows();
        if target.len() != p {
            return Err(Error::dims(format!("target of length {p}"), target.len().to_string()));
        }
        if weight.nrows() != p || weight.ncols() != p {
            return Err(Error::dims(
                format!("{p}x{p} weight"),
                format!("{}x{}", weight.nrows(), weight.ncols()),
            ));
        }
        if design.ncols() > p {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        if design
            .iter()
            .chain(target.iter())
            .chain(weight.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("least-squares problem".into()));
        }
        Ok(Self { design, target, weight })
    }

    pub fn p(&self) -> usize {
        self.design.nrows()
    }

    pub fn q(&self) -> usize {
        self.design.ncols()
    }

    /// `(t − A·x)ᵀ W⁻¹ (t − A·x)`, evaluated through the Cholesky factor.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        let l = cholesky_l(&self.weight)?;
        let r = &self.target - &self.design * x;
        let z = l.solve_lower_triangular(&r).expect("Cholesky factor is nonsingular");
        Ok(z.norm_squared())
    }
}

/// Result of a bound-constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Bounded coordinates held at zero.
    pub active_set: Vec<usize>,
    /// Gradient of the objective at `x` (`2·Aᵀ W⁻¹ (A·x − t)`); on the
    /// active set these are the bound multipliers.
    pub multipliers: DVector<f64>,
    /// Largest relative violation of the KKT conditions.
    pub kkt_residual: f64,
    /// Active-set changes (or patterns tried, for the oracle).
    pub iterations: usize,
}

/// Whitened QR factorization of a GLS problem's design, reusable for many
/// targets with the same design and weight.
#[derive(Debug, Clone)]
pub struct GlsFactor {
    l: DMatrix<f64>,
    /// `L⁻¹·A`.
    whitened: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl GlsFactor {
    pub fn new(design: &DMatrix<f64>, weight: &DMatrix<f64>) -> Result<Self> {
        let p = design.nrows();
        if weight.nrows() != p || weight.ncols() != p {
            return Err(Error::dims(
                format!("{p}x{p} weight"),
                format!("{}x{}", weight.nrows(), weight.ncols()),
            ));
        }
        if design.ncols() > p {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        let l = cholesky_l(weight)?;
        let whitened = l
            .solve_lower_triangular(design)
            .expect("Cholesky factor is nonsingular");
        let ratio = linalg::singular_ratio(&whitened);
        if design.ncols() > 0 && ratio < RANK_TOL {
            return Err(Error::RankDeficient { ratio });
        }
        let qr = whitened.clone().qr();
        Ok(Self {
            l,
            q: qr.q(),
            r: qr.r(),
            whitened,
        })
    }

    pub fn whitened_design(&self) -> &DMatrix<f64> {
        &self.whitened
    }

    /// `L⁻¹·t`.
    pub fn whiten(&self, target: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(target)
            .expect("Cholesky factor is nonsingular")
    }

    /// GLS estimate for `target`.
    pub fn solve(&self, target: &DVector<f64>) -> Result<DVector<f64>> {
        if target.len() != self.l.nrows() {
            return Err(Error::dims(
                format!("target of length {}", self.l.nrows()),
                target.len().to_string(),
            ));
        }
        let rhs = self.q.transpose() * self.whiten(target);
        Ok(self
            .r
            .solve_upper_triangular(&rhs)
            .expect("R is nonsingular after the rank check"))
    }

    /// The linear map `t ↦ x`, i.e. `(AᵀW⁻¹A)⁻¹AᵀW⁻¹` as a `q × p` matrix.
    pub fn operator(&self) -> DMatrix<f64> {
        let p = self.l.nrows();
        let linv = self
            .l
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Cholesky factor is nonsingular");
        let rhs = self.q.transpose() * linv;
        self.r
            .solve_upper_triangular(&rhs)
            .expect("R is nonsingular after the rank check")
    }
}

/// Unconstrained GLS estimate `(AᵀW⁻¹A)⁻¹AᵀW⁻¹t`.
pub fn solve_gls(p: &GlsProblem) -> Result<DVector<f64>> {
    GlsFactor::new(&p.design, &p.weight)?.solve(&p.target)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky_l(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(Error::dims("square weight", format!("{}x{}", w.nrows(), w.ncols())));
    }
    let scale = 1.0 + linalg::max_abs(w);
    if linalg::asymmetry(w) > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite("weight is not symmetric".into()));
    }
    w.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

/// Relative KKT violation of `x` for `min ½xᵀHx − cᵀx` with bounds on
/// `bound_mask`.
pub(crate) fn kkt_residual(h: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>, bound_mask: &[bool]) -> f64 {
    let hx = h * x;
    let w = c - &hx;
    let scale = linalg::max_abs_vec(c)
        .max(linalg::max_abs_vec(&hx))
        .max(f64::MIN_POSITIVE);
    let xscale = linalg::max_abs_vec(x).max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let g = w[i] / scale;
        if bound_mask[i] {
            // Primal feasibility, dual feasibility, complementarity.
            worst = worst.max((-x[i] / xscale).max(0.0));
            worst = worst.max(g.max(0.0));
            worst = worst.max((g * x[i] / xscale).abs());
        } else {
            worst = worst.max(g.abs());
        }
    }
    worst
}
