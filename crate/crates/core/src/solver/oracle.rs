//! Brute-force reference solver for small bound-constrained problems.
//!
//! Deliberately shares no code path with the active-set solver: the
//! weighted normal equations are formed with an LU solve against `W`
//! rather than a Cholesky whitening, and every active pattern is tried.

use nalgebra::{DMatrix, DVector};

use super::{GlsProblem, QpSolution};
use crate::error::{Error, Result};
use crate::linalg;

/// Largest number of bounded coordinates the oracle accepts.
pub const MAX_ORACLE_BOUNDED: usize = 12;

const ORACLE_TOL: f64 = 1e-9;

struct Normal {
    h: DMatrix<f64>,
    c: DVector<f64>,
    bounded: Vec<usize>,
}

fn normal_equations(p: &GlsProblem, bound_mask: &[bool]) -> Result<Normal> {
    let q = p.q();
    if bound_mask.len() != q {
        return Err(Error::dims(
            format!("bound mask of length {q}"),
            bound_mask.len().to_string(),
        ));
    }
    let bounded: Vec<usize> = (0..q).filter(|&i| bound_mask[i]).collect();
    if bounded.len() > MAX_ORACLE_BOUNDED {
        return Err(Error::TooManyBounded {
            max: MAX_ORACLE_BOUNDED,
            actual: bounded.len(),
        });
    }
    let lu = p.weight.clone().lu();
    let winv_a = lu
        .solve(&p.design)
        .ok_or_else(|| Error::NotPositiveDefinite("weight is singular".into()))?;
    let winv_t = lu
        .solve(&p.target)
        .ok_or_else(|| Error::NotPositiveDefinite("weight is singular".into()))?;
    let h = p.design.transpose() * winv_a;
    let c = p.design.transpose() * winv_t;
    Ok(Normal { h, c, bounded })
}

/// Solves the equality-restricted problem with the coordinates in `fixed`
/// set to zero and checks the KKT conditions. Returns the point and its
/// relative KKT residual when it satisfies them.
fn try_pattern(n: &Normal, fixed: &[usize]) -> Option<(DVector<f64>, f64)> {
    let q = n.c.len();
    let free: Vec<usize> = (0..q).filter(|i| !fixed.contains(i)).collect();
    let mut x = DVector::zeros(q);
    if !free.is_empty() {
        let hff = linalg::principal_submatrix(&n.h, &free);
        let cf = linalg::select_entries(&n.c, &free);
        let xf = hff.lu().solve(&cf)?;
        for (k, &i) in free.iter().enumerate() {
            x[i] = xf[k];
        }
    }
    let grad = &n.h * &x - &n.c;
    let scale = linalg::max_abs_vec(&n.c)
        .max(linalg::max_abs_vec(&(&n.h * &x)))
        .max(f64::MIN_POSITIVE);
    let xscale = linalg::max_abs_vec(&x).max(1.0);
    let mut worst = 0.0_f64;
    for &i in &n.bounded {
        if fixed.contains(&i) {
            // Multiplier must be non-negative.
            worst = worst.max((-grad[i] / scale).max(0.0));
        } else {
            worst = worst.max((-x[i] / xscale).max(0.0));
        }
    }
    (worst <= ORACLE_TOL).then_some((x, worst))
}

fn patterns(bounded: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0u32..(1u32 << bounded.len())).map(move |mask| {
        bounded
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &i)| i)
            .collect()
    })
}

/// Exhaustive search over all active patterns of the bounded coordinates.
///
/// Returns the first pattern (in bitmask order) whose restricted GLS
/// solution is feasible with non-negative multipliers.
pub fn oracle_enumerate(p: &GlsProblem, bound_mask: &[bool]) -> Result<QpSolution> {
    let n = normal_equations(p, bound_mask)?;
    for (tried, fixed) in patterns(&n.bounded).enumerate() {
        if let Some((x, kkt)) = try_pattern(&n, &fixed) {
            let multipliers = (&n.h * &x - &n.c) * 2.0;
            return Ok(QpSolution {
                x,
                active_set: fixed,
                multipliers,
                kkt_residual: kkt,
                iterations: tried + 1,
            });
        }
    }
    Err(Error::NoKktPoint)
}

/// Number of active patterns that satisfy the KKT conditions.
pub fn count_kkt_patterns(p: &GlsProblem, bound_mask: &[bool]) -> Result<usize> {
    let n = normal_equations(p, bound_mask)?;
    Ok(patterns(&n.bounded).filter(|f| try_pattern(&n, f).is_some()).count())
}

#[cfg(test)]
mod tests {
    use super::super::solve_gls;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xyz(t: [f64; 3]) -> GlsProblem {
        GlsProblem::new(
            DMatrix::from_row_slice(3, 2, &[1., 1., 1., 0., 0., 1.]),
            DVector::from_row_slice(&t),
            DMatrix::identity(3, 3),
        )
        .unwrap()
    }

    #[test]
    fn xyz_negative_child() {
        let sol = oracle_enumerate(&xyz([2., 5., -4.]), &[true, true]).unwrap();
        assert!((sol.x[0] - 3.5).abs() < 1e-12);
        assert_eq!(sol.x[1], 0.0);
        assert_eq!(sol.active_set, vec![1]);
        assert!((sol.multipliers[1] - 11.0).abs() < 1e-10);
    }

    #[test]
    fn inactive_optimum_equals_gls() {
        let p = xyz([10., 4., 5.]);
        let sol = oracle_enumerate(&p, &[true, true]).unwrap();
        assert!(sol.active_set.is_empty());
        assert!(linalg::max_abs_vec(&(sol.x - solve_gls(&p).unwrap())) < 1e-12);
    }

    #[test]
    fn unique_kkt_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let q = rng.random_range(1..=6);
            let p = q + 2;
            let design = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
            let target = DVector::from_fn(p, |_, _| rng.random_range(-5.0..5.0));
            let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let weight = &b * b.transpose() + DMatrix::identity(p, p);
            let prob = GlsProblem::new(design, target, weight).unwrap();
            assert_eq!(count_kkt_patterns(&prob, &vec![true; q]).unwrap(), 1);
        }
    }

    #[test]
    fn too_many_bounded() {
        let q = 13;
        let p = GlsProblem::new(DMatrix::identity(q, q), DVector::zeros(q), DMatrix::identity(q, q)).unwrap();
        assert!(matches!(
            oracle_enumerate(&p, &vec![true; q]),
            Err(Error::TooManyBounded { max: 12, actual: 13 })
        ));
    }
}
