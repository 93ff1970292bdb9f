//! Power iteration over symmetric PSD operators given by matvecs.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::stage_rng;

pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, u: &DVector<f64>) -> DVector<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        self * u
    }
}

/// u ↦ ρ·Vᵀ diag(w) V u without forming the d×d matrix.
pub struct GramOperator<'a> {
    v: &'a DMatrix<f64>,
    w: &'a DVector<f64>,
    rho: f64,
}

impl<'a> GramOperator<'a> {
    pub fn new(v: &'a DMatrix<f64>, w: &'a DVector<f64>, rho: f64) -> Self {
        Self { v, w, rho }
    }
}

impl SymmetricOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.v.ncols()
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let vu = self.v * u;
        let scaled = vu.component_mul(self.w);
        self.v.tr_mul(&scaled) * self.rho
    }
}

/// Iteration cap: enough for a (1−tol) eigenvalue estimate from a random start
/// with high probability.
pub fn iteration_cap(d: usize, relative_tol: f64) -> usize {
    ((2.0 * (4.0 * d as f64).ln().max(1.0) / relative_tol).ceil() as usize).max(10)
}

/// Returns a unit vector v₁ and λ̂₁ = v₁ᵀAv₁ for a PSD operator A.
///
/// Stops early once the residual ‖Av − λ̂v‖ is negligible. At the iteration cap
/// the estimate is returned if the residual is within √tol·λ̂; otherwise the
/// spectrum is too degenerate to trust and NoConvergence is raised.
pub fn top_eigenvector<A: SymmetricOperator + ?Sized>(
    op: &A,
    relative_tol: f64,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let d = op.dim();
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = stage_rng(seed, 0);
    let mut x = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    x /= x.norm();
    let cap = iteration_cap(d, relative_tol);
    let mut ax = op.apply(&x);
    let mut lambda = x.dot(&ax);
    for _ in 0..cap {
        let norm = ax.norm();
        if !norm.is_finite() {
            return Err(Error::NoConvergence(0));
        }
        if norm == 0.0 {
            // x lies in the kernel; the operator is zero on the start vector.
            return Ok((x, 0.0));
        }
        let resid = (&ax - &x * lambda).norm();
        if resid <= 1e-9 * norm {
            break;
        }
        x = &ax / norm;
        ax = op.apply(&x);
        lambda = x.dot(&ax);
    }
    let norm = ax.norm();
    let resid = (&ax - &x * lambda).norm();
    if resid > relative_tol.sqrt() * norm.max(lambda.abs()) {
        return Err(Error::NoConvergence(cap));
    }
    Ok((x, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let (v, l) = top_eigenvector(&m, 0.01, 1).unwrap();
        assert!(l >= 2.97);
        assert!(v[0].abs() > 0.99);
    }

    #[test]
    fn rank_one_in_one_step() {
        let u = DVector::from_vec(vec![1.0, 2.0, -2.0]) / 3.0;
        let m = &u * u.transpose();
        let (v, l) = top_eigenvector(&m, 0.01, 3).unwrap();
        assert!((v.dot(&u).abs() - 1.0).abs() < 1e-12);
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_operator() {
        let m = DMatrix::<f64>::zeros(3, 3);
        let (_, l) = top_eigenvector(&m, 0.01, 0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn gram_operator_matches_dense() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 1.0]);
        let w = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let op = GramOperator::new(&v, &w, 0.7);
        let dense = crate::linalg::weighted_gram(&v, &w) * 0.7;
        let u = DVector::from_vec(vec![0.3, -1.2]);
        assert!((op.apply(&u) - &dense * &u).norm() < 1e-14);
    }
}
