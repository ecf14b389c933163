//! Weight (error covariance) estimators for reconciliation.
//!
//! Every estimator returns an estimate of the base-forecast error
//! covariance `Σ̂`; reconciliation always minimizes the quadratic form in
//! `Σ̂⁻¹`. `Ols` is `Σ̂ = I`, the two WLS variants are diagonal, and
//! `MintShrink` shrinks the sample covariance toward its diagonal with the
//! Schäfer–Strimmer intensity.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hierarchy::{BasisSelection, Hierarchy};
use crate::linalg;

/// Relative eigenvalue floor below which jitter is added.
const PD_FLOOR: f64 = 1e-10;
/// Relative jitter added to the diagonal.
const JITTER: f64 = 1e-8;
/// Multiplier applied to the smallest positive variance to replace zeros.
const ZERO_VARIANCE_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightKind {
    Ols,
    WlsStructural,
    WlsVariance,
    MintShrink,
}

impl WeightKind {
    pub const ALL: [WeightKind; 4] = [
        WeightKind::Ols,
        WeightKind::WlsStructural,
        WeightKind::WlsVariance,
        WeightKind::MintShrink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Ols => "ols",
            WeightKind::WlsStructural => "wls_s",
            WeightKind::WlsVariance => "wls_v",
            WeightKind::MintShrink => "mint_shrink",
        }
    }

    pub fn needs_errors(self) -> bool {
        matches!(self, WeightKind::WlsVariance | WeightKind::MintShrink)
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown weight kind `{s}`")))
    }
}

/// In-sample one-step errors, `T × n`, with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    errors: DMatrix<f64>,
    observed: DMatrix<bool>,
}

impl ErrorSample {
    /// Fully observed `T × n` error matrix.
    pub fn complete(errors: DMatrix<f64>) -> Result<Self> {
        if errors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("error sample".into()));
        }
        if errors.nrows() == 0 {
            return Err(Error::InsufficientHistory("no error observations".into()));
        }
        let observed = DMatrix::from_element(errors.nrows(), errors.ncols(), true);
        Ok(Self { errors, observed })
    }

    /// One history per series; `None` marks a missing observation. Shorter
    /// histories are aligned to the most recent time point.
    pub fn from_series(series: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = series.len();
        let t = series.iter().map(Vec::len).max().unwrap_or(0);
        if t == 0 {
            return Err(Error::InsufficientHistory("no error observations".into()));
        }
        let mut errors = DMatrix::zeros(t, n);
        let mut observed = DMatrix::from_element(t, n, false);
        for (j, s) in series.iter().enumerate() {
            let offset = t - s.len();
            for (i, v) in s.iter().enumerate() {
                if let Some(v) = v {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("error sample, series {j}")));
                    }
                    errors[(offset + i, j)] = *v;
                    observed[(offset + i, j)] = true;
                }
            }
        }
        Ok(Self { errors, observed })
    }

    pub fn n_series(&self) -> usize {
        self.errors.ncols()
    }

    pub fn n_times(&self) -> usize {
        self.errors.nrows()
    }

    /// Number of valid observations per series.
    pub fn series_counts(&self) -> Vec<usize> {
        self.observed
            .column_iter()
            .map(|c| c.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Keeps only the time points where `keep` is true (e.g. to condition on
    /// promotion periods).
    pub fn select_times(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.n_times() {
            return Err(Error::dims(
                format!("{} mask entries", self.n_times()),
                keep.len().to_string(),
            ));
        }
        let rows: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
        if rows.is_empty() {
            return Err(Error::InsufficientHistory("mask selects no time points".into()));
        }
        Ok(Self {
            errors: linalg::select_rows(&self.errors, &rows),
            observed: DMatrix::from_fn(rows.len(), self.n_series(), |i, j| self.observed[(rows[i], j)]),
        })
    }

    /// Rows where both series `i` and `j` are observed.
    fn pair_rows(&self, i: usize, j: usize) -> Vec<usize> {
        (0..self.n_times())
            .filter(|&t| self.observed[(t, i)] && self.observed[(t, j)])
            .collect()
    }
}

/// A symmetric positive-definite covariance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: WeightKind,
    /// Shrinkage intensity (MinT-shrink only).
    pub shrink_lambda: Option<f64>,
    /// Jitter added to the diagonal to restore positive definiteness.
    pub jitter: f64,
    pub warnings: Vec<String>,
    /// Valid observations per series (error-based estimators only).
    pub observation_counts: Option<Vec<usize>>,
}

impl WeightMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Wraps a user-supplied covariance, validating symmetry and repairing
    /// definiteness the same way as the estimators do.
    pub fn from_covariance(matrix: DMatrix<f64>, kind: WeightKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dims(
                "square matrix",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight matrix".into()));
        }
        let scale = 1.0 + linalg::max_abs(&matrix);
        if linalg::asymmetry(&matrix) > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
        }
        Ok(finish(matrix, kind, None, Vec::new(), None))
    }
}

/// Estimates the weight matrix of the given kind for hierarchy `h`.
///
/// `errors` is required for `WlsVariance` and `MintShrink` and must have one
/// column per series of `h`. `WlsStructural` uses the row sums of `|S|`,
/// so `h` should be expressed in its bottom-level basis.
pub fn estimate(kind: WeightKind, h: &Hierarchy, errors: Option<&ErrorSample>) -> Result<WeightMatrix> {
    let n = h.n();
    if let Some(e) = errors {
        if e.n_series() != n {
            return Err(Error::dims(format!("{n} error series"), e.n_series().to_string()));
        }
    }
    let need = || errors.ok_or_else(|| Error::InsufficientHistory(format!("{kind} requires an error sample")));
    match kind {
        WeightKind::Ols => Ok(finish(DMatrix::identity(n, n), kind, None, Vec::new(), None)),
        WeightKind::WlsStructural => {
            let d = DMatrix::from_diagonal(&h.aggregation_counts().into());
            Ok(finish(d, kind, None, Vec::new(), None))
        }
        WeightKind::WlsVariance => {
            let e = need()?;
            let mut warnings = Vec::new();
            let var = variances(e, h.labels(), &mut warnings)?;
            let d = DMatrix::from_diagonal(&var.into());
            Ok(finish(d, kind, None, warnings, Some(e.series_counts())))
        }
        WeightKind::MintShrink => {
            let e = need()?;
            shrink_estimate(e, h.labels(), None)
        }
    }
}

/// MinT-shrink estimate with an optional forced intensity.
pub fn shrink_estimate(errors: &ErrorSample, labels: &[String], lambda: Option<f64>) -> Result<WeightMatrix> {
    let mut warnings = Vec::new();
    let var = variances(errors, labels, &mut warnings)?;
    let n = var.len();
    let (cov, corr, corr_var) = pairwise_moments(errors, &var);
    let lambda = match lambda {
        Some(l) if (0.0..=1.0).contains(&l) => l,
        Some(l) => return Err(Error::InvalidConfig(format!("shrinkage intensity {l} outside [0, 1]"))),
        None => {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        num += corr_var[(i, j)];
                        den += corr[(i, j)] * corr[(i, j)];
                    }
                }
            }
            if den > 0.0 {
                (num / den).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
    };
    let mut w = cov * (1.0 - lambda);
    for i in 0..n {
        w[(i, i)] = var[i];
    }
    Ok(finish(
        w,
        WeightKind::MintShrink,
        Some(lambda),
        warnings,
        Some(errors.series_counts()),
    ))
}

/// Principal submatrix of `wm` over the mutable series, ordered `(w, v)`.
pub fn restrict_to_mutable(wm: &WeightMatrix, sel: &BasisSelection) -> Result<WeightMatrix> {
    let n = sel.determined.len() + sel.mutable_basis.len() + sel.immutable_basis.len();
    if wm.dim() != n {
        return Err(Error::dims(
            format!("{n}x{n} weight matrix"),
            format!("{0}x{0}", wm.dim()),
        ));
    }
    let idx = sel.mutable();
    Ok(WeightMatrix {
        matrix: linalg::principal_submatrix(&wm.matrix, &idx),
        kind: wm.kind,
        shrink_lambda: wm.shrink_lambda,
        jitter: wm.jitter,
        warnings: wm.warnings.clone(),
        observation_counts: wm
            .observation_counts
            .as_ref()
            .map(|c| idx.iter().map(|&i| c[i]).collect()),
    })
}

/// Per-series sample variances (denominator `T − 1`), with zero variances
/// replaced by a small fraction of the smallest positive one.
fn variances(e: &ErrorSample, labels: &[String], warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    let counts = e.series_counts();
    let mut var = Vec::with_capacity(e.n_series());
    for (j, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::InsufficientHistory(format!(
                "series `{}` has {} error observations, need at least 2",
                labels.get(j).map(String::as_str).unwrap_or("?"),
                count
            )));
        }
        let rows = e.pair_rows(j, j);
        let mean = rows.iter().map(|&t| e.errors[(t, j)]).sum::<f64>() / rows.len() as f64;
        let ss: f64 = rows.iter().map(|&t| (e.errors[(t, j)] - mean).powi(2)).sum();
        var.push(ss / (rows.len() - 1) as f64);
    }
    let min_pos = var.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        return Err(Error::ZeroVariance);
    }
    for (j, v) in var.iter_mut().enumerate() {
        if *v == 0.0 {
            *v = min_pos * ZERO_VARIANCE_FACTOR;
            warnings.push(format!(
                "series `{}` has zero error variance; replaced by {:.3e}",
                labels.get(j).map(String::as_str).unwrap_or("?"),
                *v
            ));
        }
    }
    Ok(var)
}

/// Pairwise-complete covariance, correlation, and the Schäfer–Strimmer
/// variance estimate of each correlation.
fn pairwise_moments(e: &ErrorSample, var: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = var.len();
    let mut cov = DMatrix::zeros(n, n);
    let mut corr = DMatrix::zeros(n, n);
    let mut corr_var = DMatrix::zeros(n, n);
    for i in 0..n {
        cov[(i, i)] = var[i];
        corr[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let rows = e.pair_rows(i, j);
            let t = rows.len();
            if t < 2 {
                continue;
            }
            let tf = t as f64;
            let xi: Vec<f64> = rows.iter().map(|&r| e.errors[(r, i)]).collect();
            let xj: Vec<f64> = rows.iter().map(|&r| e.errors[(r, j)]).collect();
            let mi = xi.iter().sum::<f64>() / tf;
            let mj = xj.iter().sum::<f64>() / tf;
            let sij: f64 = xi.iter().zip(&xj).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / (tf - 1.0);
            cov[(i, j)] = sij;
            cov[(j, i)] = sij;

            let si = (xi.iter().map(|a| (a - mi).powi(2)).sum::<f64>() / (tf - 1.0)).sqrt();
            let sj = (xj.iter().map(|b| (b - mj).powi(2)).sum::<f64>() / (tf - 1.0)).sqrt();
            if si == 0.0 || sj == 0.0 {
                continue;
            }
            // w_t = standardized cross products; r = t/(t-1)·mean(w).
            let w: Vec<f64> = xi
                .iter()
                .zip(&xj)
                .map(|(a, b)| ((a - mi) / si) * ((b - mj) / sj))
                .collect();
            let wbar = w.iter().sum::<f64>() / tf;
            let r = tf / (tf - 1.0) * wbar;
            let vr = tf / (tf - 1.0).powi(3) * w.iter().map(|x| (x - wbar).powi(2)).sum::<f64>();
            corr[(i, j)] = r;
            corr[(j, i)] = r;
            corr_var[(i, j)] = vr;
            corr_var[(j, i)] = vr;
        }
    }
    (cov, corr, corr_var)
}

fn finish(
    mut matrix: DMatrix<f64>,
    kind: WeightKind,
    shrink_lambda: Option<f64>,
    warnings: Vec<String>,
    observation_counts: Option<Vec<usize>>,
) -> WeightMatrix {
    // Exact symmetry.
    let sym = (&matrix + matrix.transpose()) * 0.5;
    matrix = sym;
    let jitter = pd_jitter(&matrix);
    if jitter > 0.0 {
        for i in 0..matrix.nrows() {
            matrix[(i, i)] += jitter;
        }
    }
    WeightMatrix {
        matrix,
        kind,
        shrink_lambda,
        jitter,
        warnings,
        observation_counts,
    }
}

/// Diagonal shift needed to lift the smallest eigenvalue above the floor.
fn pd_jitter(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let avg = m.trace() / n as f64;
    let scale = if avg > 0.0 { avg } else { 1.0 };
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig >= PD_FLOOR * scale {
        return 0.0;
    }
    // Enough to clear a negative eigenvalue plus the standard jitter.
    (-min_eig).max(0.0) + JITTER * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_errors(t: usize, n: usize, seed: u64) -> ErrorSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let common: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = DMatrix::from_fn(t, n, |i, j| common[i] * (j as f64 % 3.0) + rng.random_range(-1.0..1.0));
        ErrorSample::complete(m).unwrap()
    }

    #[test]
    fn ols_is_identity() {
        let h = figure1();
        let w = estimate(WeightKind::Ols, &h, None).unwrap();
        assert_eq!(w.matrix, DMatrix::identity(7, 7));
        assert_eq!(w.jitter, 0.0);
    }

    #[test]
    fn wls_structural_counts() {
        let h = figure1();
        let w = estimate(WeightKind::WlsStructural, &h, None).unwrap();
        let d: Vec<f64> = w.matrix.diagonal().iter().copied().collect();
        assert_eq!(d, vec![4., 2., 2., 1., 1., 1., 1.]);
    }

    #[test]
    fn wls_variance_two_samples() {
        let h = figure1();
        let e = ErrorSample::complete(DMatrix::from_fn(2, 7, |i, _| if i == 0 { 1.0 } else { -1.0 })).unwrap();
        let w = estimate(WeightKind::WlsVariance, &h, Some(&e)).unwrap();
        assert_eq!(w.matrix, DMatrix::identity(7, 7) * 2.0);
    }

    #[test]
    fn error_based_kinds_require_errors() {
        let h = figure1();
        assert!(matches!(
            estimate(WeightKind::MintShrink, &h, None),
            Err(Error::InsufficientHistory(_))
        ));
        let short = ErrorSample::complete(DMatrix::zeros(1, 7)).unwrap();
        assert!(estimate(WeightKind::WlsVariance, &h, Some(&short)).is_err());
        assert!(matches!(
            ErrorSample::complete(DMatrix::from_element(3, 2, f64::NAN)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_variance_is_replaced() {
        let h = figure1();
        let mut m = DMatrix::from_fn(4, 7, |i, j| (i as f64 - 1.5) * (j + 1) as f64);
        m.column_mut(3).fill(0.0);
        let e = ErrorSample::complete(m).unwrap();
        let w = estimate(WeightKind::WlsVariance, &h, Some(&e)).unwrap();
        let min_pos = w.matrix[(0, 0)];
        assert!((w.matrix[(3, 3)] - min_pos * 1e-3).abs() < 1e-15);
        assert_eq!(w.warnings.len(), 1);
        let all_zero = ErrorSample::complete(DMatrix::zeros(4, 7)).unwrap();
        assert!(matches!(
            estimate(WeightKind::WlsVariance, &h, Some(&all_zero)),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn shrink_endpoints() {
        let h = figure1();
        let e = random_errors(40, 7, 3);
        let wv = estimate(WeightKind::WlsVariance, &h, Some(&e)).unwrap();
        let one = shrink_estimate(&e, h.labels(), Some(1.0)).unwrap();
        assert_eq!(one.matrix, wv.matrix);
        let zero = shrink_estimate(&e, h.labels(), Some(0.0)).unwrap();
        // Sample covariance computed directly.
        let m = &e.errors;
        let mean = m.row_mean();
        let centered = DMatrix::from_fn(40, 7, |i, j| m[(i, j)] - mean[j]);
        let sample = centered.transpose() * &centered / 39.0;
        assert!(linalg::max_abs(&(zero.matrix - sample)) < 1e-12);
    }

    #[test]
    fn shrink_lambda_matches_direct_formula() {
        let h = figure1();
        let e = random_errors(30, 7, 11);
        let w = estimate(WeightKind::MintShrink, &h, Some(&e)).unwrap();
        let lambda = w.shrink_lambda.unwrap();

        // Direct computation on the standardized matrix.
        let (t, n) = (30usize, 7usize);
        let tf = t as f64;
        let m = &e.errors;
        let mean = m.row_mean();
        let sd: Vec<f64> = (0..n)
            .map(|j| ((0..t).map(|i| (m[(i, j)] - mean[j]).powi(2)).sum::<f64>() / (tf - 1.0)).sqrt())
            .collect();
        let z = DMatrix::from_fn(t, n, |i, j| (m[(i, j)] - mean[j]) / sd[j]);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w: Vec<f64> = (0..t).map(|k| z[(k, i)] * z[(k, j)]).collect();
                let wbar = w.iter().sum::<f64>() / tf;
                let r = tf / (tf - 1.0) * wbar;
                num += tf / (tf - 1.0).powi(3) * w.iter().map(|x| (x - wbar).powi(2)).sum::<f64>();
                den += r * r;
            }
        }
        assert!((lambda - (num / den).clamp(0.0, 1.0)).abs() < 1e-12);
        assert!(lambda > 0.0 && lambda < 1.0);
        assert!(linalg::asymmetry(&w.matrix) <= 1e-12);
        assert!(linalg::min_eigenvalue(&w.matrix) > 0.0);
    }

    #[test]
    fn restriction_keeps_joint_estimate() {
        let h = figure1();
        let e = random_errors(25, 7, 5);
        let full = estimate(WeightKind::MintShrink, &h, Some(&e)).unwrap();
        let sel = h.partition(&["Total"]).unwrap();
        let restricted = restrict_to_mutable(&full, &sel).unwrap();
        let idx = sel.mutable();
        assert_eq!(restricted.matrix, linalg::principal_submatrix(&full.matrix, &idx));

        // Re-estimating on the mutable columns alone changes the intensity,
        // so the two constructions differ; the joint restriction is kept.
        let sub = ErrorSample::complete(linalg::select_cols(&e.errors, &idx)).unwrap();
        let labels: Vec<String> = idx.iter().map(|&i| h.labels()[i].clone()).collect();
        let re = shrink_estimate(&sub, &labels, None).unwrap();
        assert_ne!(re.shrink_lambda, full.shrink_lambda);
        assert!(linalg::max_abs(&(re.matrix - &restricted.matrix)) > 0.0);

        let ols = estimate(WeightKind::Ols, &h, None).unwrap();
        assert_eq!(restrict_to_mutable(&ols, &sel).unwrap().matrix, DMatrix::identity(6, 6));
    }

    #[test]
    fn restriction_dimension_mismatch() {
        let h = figure1();
        let sel = h.partition(&["Total"]).unwrap();
        let w = WeightMatrix::from_covariance(DMatrix::identity(3, 3), WeightKind::Ols).unwrap();
        assert!(matches!(
            restrict_to_mutable(&w, &sel),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn missing_entries_use_pairwise_rows() {
        let h = figure1();
        let full = random_errors(20, 7, 9);
        let mut series: Vec<Vec<Option<f64>>> = (0..7)
            .map(|j| (0..20).map(|i| Some(full.errors[(i, j)])).collect())
            .collect();
        // Series 0 is shorter; series 3 has a gap.
        series[0] = series[0][5..].to_vec();
        series[3][10] = None;
        let e = ErrorSample::from_series(&series).unwrap();
        assert_eq!(e.series_counts(), vec![15, 20, 20, 19, 20, 20, 20]);
        let w = estimate(WeightKind::MintShrink, &h, Some(&e)).unwrap();
        assert!(linalg::min_eigenvalue(&w.matrix) > 0.0);
        assert_eq!(w.observation_counts.as_deref(), Some(&[15, 20, 20, 19, 20, 20, 20][..]));
    }

    #[test]
    fn jitter_restores_definiteness() {
        // Rank-one sample: the pairwise covariance is singular.
        let w = WeightMatrix::from_covariance(DMatrix::from_element(3, 3, 1.0), WeightKind::MintShrink).unwrap();
        assert!(w.jitter > 0.0);
        assert!(linalg::min_eigenvalue(&w.matrix) >= 1e-8 * 0.99);
    }

    #[test]
    fn select_times_masks_rows() {
        let e = random_errors(10, 3, 1);
        let keep: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let sub = e.select_times(&keep).unwrap();
        assert_eq!(sub.n_times(), 5);
        assert!(e.select_times(&[true]).is_err());
    }
}
