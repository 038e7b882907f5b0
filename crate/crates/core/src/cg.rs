// SPDX-License-Identifier: Apache-2.0

//! Conjugate gradients for the symmetric positive definite x-update system.

use crate::error::{Error, Result};
use crate::linops::SparseMatrix;
use crate::vecops::{axpy, dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// `‖r‖ / ‖b‖` after each iteration, starting with the warm-start residual.
    pub residual_history: Vec<f64>,
}

impl CgOutcome {
    pub fn relative_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

/// Solve `Q x = b` starting from the current contents of `x`.
///
/// Stops once `‖b − Qx‖ ≤ tol ‖b‖`. A non-positive curvature `pᵀQp` means Q
/// is not positive definite and is reported as an error.
pub fn conjugate_gradient(
    q: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    if q.rows() != n || q.cols() != n || x.len() != n {
        return Err(Error::DimensionMismatch {
            context: "conjugate gradient",
            expected: q.rows(),
            got: n,
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            converged: true,
            residual_history: vec![0.0],
        });
    }

    let mut r = b.to_vec();
    let mut qp = vec![0.0; n];
    q.matvec_into(x, &mut qp);
    axpy(-1.0, &qp, &mut r);
    let mut rr = dot(&r, &r);
    let mut history = vec![rr.sqrt() / bnorm];
    if rr.sqrt() <= tol * bnorm {
        return Ok(CgOutcome {
            iterations: 0,
            converged: true,
            residual_history: history,
        });
    }

    let mut p = r.clone();
    for it in 1..=max_iters {
        q.matvec_into(&p, &mut qp);
        let curvature = dot(&p, &qp);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::NotPositiveDefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, x);
        axpy(-alpha, &qp, &mut r);
        let rr_new = dot(&r, &r);
        history.push(rr_new.sqrt() / bnorm);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome {
                iterations: it,
                converged: true,
                residual_history: history,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(CgOutcome {
        iterations: max_iters,
        converged: false,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_identity_in_one_step() {
        let q = SparseMatrix::from_triplets(4, 4, &(0..4).map(|i| (i, i, 2.0)).collect::<Vec<_>>()).unwrap();
        let b = [1.0, -2.0, 3.0, 0.5];
        let rhs: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let mut x = vec![0.0; 4];
        let out = conjugate_gradient(&q, &rhs, &mut x, 1e-8, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(x.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn warm_start_at_solution() {
        let q = SparseMatrix::identity(3);
        let b = [1.0, 2.0, 3.0];
        let mut x = b.to_vec();
        let out = conjugate_gradient(&q, &b, &mut x, 1e-8, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0));
        let spd = a.transpose() * &a + DMatrix::identity(20, 20) * 0.5;
        let q = SparseMatrix::from_dense(&spd);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; 20];
        let out = conjugate_gradient(&q, &b, &mut x, 1e-12, 500).unwrap();
        assert!(out.converged);
        let exact = spd.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = x.iter().zip(exact.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn detects_indefinite_matrix() {
        let q = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let mut x = vec![0.0; 2];
        let err = conjugate_gradient(&q, &[0.0, 1.0], &mut x, 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }
}
