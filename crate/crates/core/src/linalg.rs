//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Singular-value ratio below which a square or tall matrix is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Ratio σ_min / σ_max of the singular values (0 for an all-zero matrix).
pub fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    let min = if m.nrows() >= m.ncols() { sv.min() } else { 0.0 };
    min / max
}

/// Numerical rank: number of singular values above `RANK_TOL * σ_max`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Rows of `m` at `rows`, in that order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_cols(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

pub fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Largest deviation from symmetry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// A factor `F` with `F·Fᵀ = m` for a symmetric positive semi-definite `m`.
///
/// Uses Cholesky when possible and falls back to an eigen square root with
/// negative eigenvalues clipped to zero, which also covers the all-zero
/// covariance used by degenerate simulation configs.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut f = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_rows() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(rank(&m), 2);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(rank(&d), 1);
        assert!(singular_ratio(&d) < RANK_TOL);
    }

    #[test]
    fn psd_factor_handles_zero_and_pd() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(max_abs(&psd_factor(&z)), 0.0);
        let pd = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 3.0]);
        let f = psd_factor(&pd);
        assert!(max_abs(&(&f * f.transpose() - &pd)) < 1e-12);
    }
}
