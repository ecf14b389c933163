//! Primal active-set method for bound-constrained GLS.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, GlsFactor, GlsProblem, QpSolution};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative gradient threshold for a bound to be released.
const ENTER_TOL: f64 = 1e-12;

/// Minimizes the GLS objective subject to `x_i ≥ 0` wherever `bound_mask`
/// is set.
///
/// Lawson–Hanson iterations on the whitened normal equations
/// `H = ÃᵀÃ`, `c = Ãᵀt̃`: unbounded coordinates are always free; a bounded
/// coordinate is released when its gradient component points into the
/// feasible region, and the iterate is moved back to feasibility whenever
/// the free subproblem drives a bounded coordinate non-positive. Bland's
/// rule (smallest index first) picks the released coordinate. Each free set
/// is solved with a fresh Cholesky factorization of `H_PP`.
pub fn solve_nnls(p: &GlsProblem, bound_mask: &[bool]) -> Result<QpSolution> {
    let q = p.q();
    if bound_mask.len() != q {
        return Err(Error::dims(
            format!("bound mask of length {q}"),
            bound_mask.len().to_string(),
        ));
    }
    let factor = GlsFactor::new(&p.design, &p.weight)?;
    let a = factor.whitened_design();
    let h = a.transpose() * a;
    let tw = factor.whiten(&p.target);
    let c = a.transpose() * &tw;
    let cap = 100 * q.max(1);

    let mut free: Vec<bool> = bound_mask.iter().map(|&b| !b).collect();
    let mut x = subproblem(&h, &c, &free, a, &tw);
    let mut skip = vec![false; q];
    let mut iterations = 0;

    loop {
        let w = &c - &h * &x;
        let scale = linalg::max_abs_vec(&c)
            .max(linalg::max_abs_vec(&(&h * &x)))
            .max(f64::MIN_POSITIVE);
        let Some(enter) = (0..q).find(|&i| bound_mask[i] && !free[i] && !skip[i] && w[i] > ENTER_TOL * scale) else {
            break;
        };
        free[enter] = true;
        iterations += 1;
        let mut first = true;
        loop {
            if iterations > cap {
                let kkt = kkt_residual(&h, &c, &x, bound_mask);
                return Err(Error::IterationCap {
                    iterations,
                    kkt_residual: kkt,
                    best: x.iter().copied().collect(),
                });
            }
            let z = subproblem(&h, &c, &free, a, &tw);
            let blocking: Vec<usize> = (0..q).filter(|&j| bound_mask[j] && free[j] && z[j] <= 0.0).collect();
            if blocking.is_empty() {
                x = z;
                skip.fill(false);
                break;
            }
            if first && blocking == [enter] {
                // Rounding made the released coordinate non-improving; keep
                // it bound and try the next candidate.
                free[enter] = false;
                skip[enter] = true;
                break;
            }
            first = false;
            // Bland: among equal step lengths the smallest index leaves.
            let (leave, alpha) =
                blocking
                    .iter()
                    .map(|&j| (j, x[j] / (x[j] - z[j])))
                    .fold(
                        (usize::MAX, f64::INFINITY),
                        |acc, cur| if cur.1 < acc.1 { cur } else { acc },
                    );
            let alpha = alpha.clamp(0.0, 1.0);
            x += (z - &x) * alpha;
            let tiny = 1e-14 * linalg::max_abs_vec(&x).max(1.0);
            for j in 0..q {
                if bound_mask[j] && free[j] && (j == leave || x[j] <= tiny) {
                    free[j] = false;
                    x[j] = 0.0;
                    iterations += 1;
                }
            }
            if alpha > 0.0 {
                skip.fill(false);
            }
        }
    }

    for j in 0..q {
        if bound_mask[j] && !free[j] {
            x[j] = 0.0;
        }
    }
    let active_set = (0..q).filter(|&j| bound_mask[j] && !free[j]).collect();
    let multipliers = (&h * &x - &c) * 2.0;
    Ok(QpSolution {
        kkt_residual: kkt_residual(&h, &c, &x, bound_mask),
        x,
        active_set,
        multipliers,
        iterations,
    })
}

/// Minimizer of `½xᵀHx − cᵀx` over the free coordinates, zero elsewhere.
fn subproblem(h: &DMatrix<f64>, c: &DVector<f64>, free: &[bool], a: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let mut x = DVector::zeros(free.len());
    if idx.is_empty() {
        return x;
    }
    let hpp = linalg::principal_submatrix(h, &idx);
    let cp = linalg::select_entries(c, &idx);
    let zp = match hpp.cholesky() {
        Some(ch) => ch.solve(&cp),
        None => {
            // H_PP is positive definite in exact arithmetic; fall back to a
            // QR solve on the whitened columns if rounding breaks Cholesky.
            let ap = linalg::select_cols(a, &idx);
            let qr = ap.qr();
            let rhs = qr.q().transpose() * t;
            qr.r()
                .solve_upper_triangular(&rhs)
                .unwrap_or_else(|| DVector::zeros(idx.len()))
        }
    };
    for (k, &i) in idx.iter().enumerate() {
        x[i] = zp[k];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::super::{oracle_enumerate, solve_gls};
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn xyz_problem(t: [f64; 3]) -> GlsProblem {
        GlsProblem::new(
            DMatrix::from_row_slice(3, 2, &[1., 1., 1., 0., 0., 1.]),
            DVector::from_row_slice(&t),
            DMatrix::identity(3, 3),
        )
        .unwrap()
    }

    pub(crate) fn random_problem(rng: &mut ChaCha8Rng, q: usize) -> (GlsProblem, Vec<bool>) {
        let p = q + rng.random_range(0..4);
        let design = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
        let target = DVector::from_fn(p, |_, _| rng.random_range(-5.0..5.0));
        let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let weight = &b * b.transpose() + DMatrix::identity(p, p) * 0.5;
        let mask = (0..q).map(|_| rng.random_bool(0.7)).collect();
        (GlsProblem::new(design, target, weight).unwrap(), mask)
    }

    #[test]
    fn xyz_negative_child() {
        let sol = solve_nnls(&xyz_problem([2., 5., -4.]), &[true, true]).unwrap();
        assert_relative_eq!(sol.x[0], 3.5, epsilon = 1e-12);
        assert_eq!(sol.x[1], 0.0);
        assert_eq!(sol.active_set, vec![1]);
        assert_relative_eq!(sol.multipliers[1], 11.0, epsilon = 1e-10);
        assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn inactive_bounds_match_gls() {
        let p = xyz_problem([10., 4., 5.]);
        let sol = solve_nnls(&p, &[true, true]).unwrap();
        assert!(sol.active_set.is_empty());
        let gls = solve_gls(&p).unwrap();
        assert!(linalg::max_abs_vec(&(sol.x - gls)) < 1e-12);
    }

    #[test]
    fn unbounded_coordinates_stay_free() {
        let sol = solve_nnls(&xyz_problem([2., 5., -4.]), &[false, false]).unwrap();
        assert!(sol.x[1] < 0.0);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let q = rng.random_range(1..=6);
            let (p, mask) = random_problem(&mut rng, q);
            let a = solve_nnls(&p, &mask).unwrap();
            let b = oracle_enumerate(&p, &mask).unwrap();
            assert!(linalg::max_abs_vec(&(&a.x - &b.x)) <= 1e-6, "{:?} vs {:?}", a.x, b.x);
            assert!(a.kkt_residual <= 1e-8);
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    assert!(a.x[i] >= -1e-10);
                }
            }
            let fa = p.objective(&a.x).unwrap();
            let fg = p.objective(&solve_gls(&p).unwrap()).unwrap();
            assert!(fa >= fg - 1e-10);
        }
    }

    #[test]
    fn weight_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (p, mask) = random_problem(&mut rng, 5);
            let scaled = GlsProblem::new(p.design.clone(), p.target.clone(), &p.weight * 37.5).unwrap();
            let a = solve_nnls(&p, &mask).unwrap().x;
            let b = solve_nnls(&scaled, &mask).unwrap().x;
            assert!(linalg::max_abs_vec(&(&a - &b)) <= 1e-9 * linalg::max_abs_vec(&a).max(1.0));
        }
    }

    #[test]
    fn mask_length_checked() {
        assert!(solve_nnls(&xyz_problem([1., 1., 1.]), &[true]).is_err());
    }
}
