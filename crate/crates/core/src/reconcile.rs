//! Linear reconciliation `ỹ = S·G·ŷ`, with optional immutable series and
//! non-negativity bounds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::{restrict_to_mutable, WeightMatrix};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::linalg;
use crate::solver::{solve_nnls, GlsFactor, GlsProblem};

/// Base forecasts for every series, one column per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    labels: Vec<String>,
    base: DMatrix<f64>,
}

impl ForecastPanel {
    pub fn new(labels: Vec<String>, base: DMatrix<f64>) -> Result<Self> {
        if labels.len() != base.nrows() {
            return Err(Error::dims(
                format!("{} forecast rows", labels.len()),
                base.nrows().to_string(),
            ));
        }
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("base forecasts".into()));
        }
        Ok(Self { labels, base })
    }

    /// A panel in the hierarchy's own series order.
    pub fn for_hierarchy(h: &Hierarchy, base: DMatrix<f64>) -> Result<Self> {
        Self::new(h.labels().to_vec(), base)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn horizons(&self) -> usize {
        self.base.ncols()
    }

    /// Rows reordered to the series order of `h`. Every series of `h` must
    /// appear exactly once.
    pub fn aligned(&self, h: &Hierarchy) -> Result<DMatrix<f64>> {
        if self.labels.len() != h.n() {
            return Err(Error::dims(format!("{} series", h.n()), self.labels.len().to_string()));
        }
        if self.labels == h.labels() {
            return Ok(self.base.clone());
        }
        let mut rows = vec![usize::MAX; h.n()];
        for (r, l) in self.labels.iter().enumerate() {
            let i = h.index_of(l).ok_or_else(|| Error::UnknownLabel(l.clone()))?;
            if rows[i] != usize::MAX {
                return Err(Error::DuplicateLabel(l.clone()));
            }
            rows[i] = r;
        }
        Ok(linalg::select_rows(&self.base, &rows))
    }
}

/// Diagnostics attached to every reconciliation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Basis of the returned `g_matrix`, mutable basis first.
    pub basis: Vec<String>,
    pub immutable: Vec<String>,
    pub determined: Vec<String>,
    pub weight_kind: String,
    pub shrink_lambda: Option<f64>,
    pub jitter: f64,
    /// Series held at zero by the bounds, per horizon.
    pub active_sets: Vec<Vec<String>>,
    /// KKT residual of the bounded solve, per horizon.
    pub kkt_residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationResult {
    /// `n × H` reconciled forecasts in the hierarchy's series order.
    pub reconciled: DMatrix<f64>,
    /// Realized `m × n` map from base forecasts to the basis listed in
    /// `basis`; `None` when bounds were active, since the map then differs
    /// across horizons and is not linear.
    pub g_matrix: Option<DMatrix<f64>>,
    /// Series indices of the basis that `g_matrix` maps to.
    pub basis: Vec<usize>,
    pub coherence_residual: f64,
    pub immutability_residual: f64,
    pub diagnostics: Diagnostics,
}

impl ReconciliationResult {
    /// Reconciled forecasts as a panel in hierarchy order.
    pub fn panel(&self, h: &Hierarchy) -> ForecastPanel {
        ForecastPanel {
            labels: h.labels().to_vec(),
            base: self.reconciled.clone(),
        }
    }
}

fn check_weight(h: &Hierarchy, wm: &WeightMatrix) -> Result<()> {
    if wm.dim() != h.n() {
        return Err(Error::dims(
            format!("{0}x{0} weight matrix", h.n()),
            format!("{0}x{0}", wm.dim()),
        ));
    }
    Ok(())
}

fn base_diagnostics(h: &Hierarchy, wm: &WeightMatrix) -> Diagnostics {
    Diagnostics {
        basis: h.basis_labels(),
        weight_kind: wm.kind.name().to_string(),
        shrink_lambda: wm.shrink_lambda,
        jitter: wm.jitter,
        warnings: wm.warnings.clone(),
        ..Diagnostics::default()
    }
}

/// Standard reconciliation `G = (SᵀW⁻¹S)⁻¹SᵀW⁻¹` with `W` the error
/// covariance estimate.
pub fn reconcile_unconstrained(
    h: &Hierarchy,
    wm: &WeightMatrix,
    panel: &ForecastPanel,
) -> Result<ReconciliationResult> {
    check_weight(h, wm)?;
    let base = panel.aligned(h)?;
    let factor = GlsFactor::new(h.s_matrix(), &wm.matrix)?;
    let g = factor.operator();
    let sg = h.s_matrix() * &g;
    let mut reconciled = &sg * &base;
    // Basis rows of S are exact unit vectors, so the basis entries equal G·ŷ.
    let b = &g * &base;
    for (j, &i) in h.basis().iter().enumerate() {
        reconciled.row_mut(i).copy_from(&b.row(j));
    }
    let coherence_residual = max_coherence(h, &reconciled);
    Ok(ReconciliationResult {
        reconciled,
        g_matrix: Some(g),
        basis: h.basis().to_vec(),
        coherence_residual,
        immutability_residual: 0.0,
        diagnostics: base_diagnostics(h, wm),
    })
}

/// Reconciliation that leaves the forecasts of `immutable` unchanged.
///
/// The hierarchy is rebased onto `(v, u)` with `u` the immutable series.
/// Substituting `u = û` leaves a GLS problem in the mutable basis `v` only:
/// the design stacks `S₁` (determined rows) over the identity, the target
/// is `(ŵ − S₂û, v̂)` and the weight is the mutable block of `W`. With
/// `nonneg`, `v ≥ 0` is imposed through the active-set solver.
pub fn reconcile_immutable<S: AsRef<str>>(
    h: &Hierarchy,
    immutable: &[S],
    wm: &WeightMatrix,
    panel: &ForecastPanel,
    nonneg: bool,
) -> Result<ReconciliationResult> {
    check_weight(h, wm)?;
    let imm_idx = h.indices_of(immutable)?;
    let base = panel.aligned(h)?;
    let sel = h.partition_indices(&imm_idx)?;
    let rebased = sel.rebased();
    let s_star = rebased.s_matrix();
    let (n, m, k) = (h.n(), h.m(), sel.k());
    let mk = m - k;
    let w_idx = &sel.determined;
    let v_idx = &sel.mutable_basis;
    let u_idx = &sel.immutable_basis;
    let nw = w_idx.len();

    let mut diagnostics = base_diagnostics(rebased, wm);
    let name = |i: &usize| h.labels()[*i].clone();
    diagnostics.immutable = u_idx.iter().map(name).collect();
    diagnostics.determined = w_idx.iter().map(name).collect();

    let scale = 1.0 + linalg::max_abs(&base);
    if nonneg {
        for &i in u_idx {
            if base.row(i).iter().any(|&v| v < 0.0) {
                diagnostics.warnings.push(format!(
                    "immutable series `{}` has negative base forecasts; they are kept unchanged",
                    h.labels()[i]
                ));
            }
        }
    }

    // Mutable-basis estimates, one column per horizon.
    let horizons = base.ncols();
    let mut v_tilde = DMatrix::zeros(mk, horizons);
    let mut g_matrix = None;
    if mk > 0 {
        let wv = restrict_to_mutable(wm, &sel)?;
        let design = {
            let mut d = DMatrix::zeros(nw + mk, mk);
            d.view_mut((0, 0), (nw, mk)).copy_from(&sel.s1);
            d.view_mut((nw, 0), (mk, mk)).fill_with_identity();
            d
        };
        let factor = GlsFactor::new(&design, &wv.matrix)?;
        let mut any_active = false;
        for t in 0..horizons {
            let y = base.column(t);
            let u_hat = DVector::from_fn(k, |r, _| y[u_idx[r]]);
            let s2u = &sel.s2 * &u_hat;
            let target = DVector::from_fn(
                nw + mk,
                |r, _| {
                    if r < nw {
                        y[w_idx[r]] - s2u[r]
                    } else {
                        y[v_idx[r - nw]]
                    }
                },
            );
            let v = if nonneg {
                let problem = GlsProblem::new(design.clone(), target, wv.matrix.clone())?;
                let sol = solve_nnls(&problem, &vec![true; mk])?;
                any_active |= !sol.active_set.is_empty();
                diagnostics
                    .active_sets
                    .push(sol.active_set.iter().map(|&j| h.labels()[v_idx[j]].clone()).collect());
                diagnostics.kkt_residuals.push(sol.kkt_residual);
                sol.x
            } else {
                factor.solve(&target)?
            };
            v_tilde.set_column(t, &v);
        }
        if !any_active {
            g_matrix = Some(compose_g(&factor.operator(), &sel.s2, w_idx, v_idx, u_idx, n, m));
        }
    } else {
        g_matrix = Some(compose_g(&DMatrix::zeros(0, nw), &sel.s2, w_idx, v_idx, u_idx, n, m));
    }

    // ỹ = S*·(ṽ, û), with basis rows written back exactly.
    let mut b = DMatrix::zeros(m, horizons);
    b.view_mut((0, 0), (mk, horizons)).copy_from(&v_tilde);
    for (r, &i) in u_idx.iter().enumerate() {
        b.row_mut(mk + r).copy_from(&base.row(i));
    }
    let mut reconciled = s_star * &b;
    for (j, &i) in rebased.basis().iter().enumerate() {
        reconciled.row_mut(i).copy_from(&b.row(j));
    }

    if nonneg {
        let floor = -1e-10 * scale;
        for &i in w_idx {
            if reconciled.row(i).iter().any(|&v| v < floor) {
                diagnostics.warnings.push(format!(
                    "determined series `{}` is negative after reconciliation",
                    h.labels()[i]
                ));
            }
        }
    }

    let immutability_residual = u_idx
        .iter()
        .map(|&i| linalg::max_abs_vec(&(reconciled.row(i) - base.row(i)).transpose()))
        .fold(0.0, f64::max);
    Ok(ReconciliationResult {
        coherence_residual: max_coherence(h, &reconciled),
        reconciled,
        g_matrix,
        basis: sel.basis(),
        immutability_residual,
        diagnostics,
    })
}

/// Assembles the `m × n` map `ŷ ↦ (ṽ, û)` from the mutable-problem
/// operator `G₁` (columns ordered `w, v`).
fn compose_g(
    g1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    w_idx: &[usize],
    v_idx: &[usize],
    u_idx: &[usize],
    n: usize,
    m: usize,
) -> DMatrix<f64> {
    let mk = v_idx.len();
    let nw = w_idx.len();
    let mut g = DMatrix::zeros(m, n);
    if mk > 0 {
        for (c, &i) in w_idx.iter().enumerate() {
            g.view_mut((0, i), (mk, 1)).copy_from(&g1.column(c));
        }
        for (c, &i) in v_idx.iter().enumerate() {
            g.view_mut((0, i), (mk, 1)).copy_from(&g1.column(nw + c));
        }
        let gw = g1.columns(0, nw);
        let gu = -(gw * s2);
        for (c, &i) in u_idx.iter().enumerate() {
            g.view_mut((0, i), (mk, 1)).copy_from(&gu.column(c));
        }
    }
    for (r, &i) in u_idx.iter().enumerate() {
        g[(mk + r, i)] = 1.0;
    }
    g
}

fn max_coherence(h: &Hierarchy, y: &DMatrix<f64>) -> f64 {
    y.column_iter()
        .map(|c| h.coherence_residual(&c.into_owned()))
        .fold(0.0, f64::max)
}

/// `‖G·S* − I‖∞` where `S*` is `h` rebased onto the result's basis.
///
/// Returns `None` when the result carries no realized map (active bounds).
pub fn g_matrix_check(result: &ReconciliationResult, h: &Hierarchy) -> Result<Option<f64>> {
    let Some(g) = &result.g_matrix else {
        return Ok(None);
    };
    let s = if result.basis == h.basis() {
        h.s_matrix().clone()
    } else {
        h.rebase(&result.basis)?.s_matrix().clone()
    };
    let m = s.ncols();
    Ok(Some(linalg::max_abs(&(g * s - DMatrix::identity(m, m)))))
}
