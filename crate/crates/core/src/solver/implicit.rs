//! Averages of normalized matrix exponentials, applied by matvecs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{sym_expm, weighted_gram};

use super::chebyshev::ChebyshevSeries;

/// Dimension up to which the operator is materialized densely.
pub const IMPLICIT_DENSE_THRESHOLD: usize = 64;

/// One term exp(Ψ − shift)/normalizer with Ψ = ρ·Vᵀ diag(x) V.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitBlock {
    pub x: DVector<f64>,
    pub shift: f64,
    pub normalizer: f64,
    /// tr(exp(Ψ − shift)) of the top block.
    pub top_trace: f64,
    /// Largest eigenvalue of Ψ (upper end of the approximation interval).
    pub lambda_max: f64,
}

/// M = scale·(1/T)·Σₜ exp(Ψₜ − shiftₜ)/normalizerₜ.
#[derive(Debug, Clone)]
pub struct ImplicitPsdOperator {
    v: Arc<DMatrix<f64>>,
    rho: f64,
    blocks: Arc<Vec<ImplicitBlock>>,
    scale: f64,
    tol: f64,
    dense: Option<Arc<DMatrix<f64>>>,
}

impl ImplicitPsdOperator {
    pub fn new(v: Arc<DMatrix<f64>>, rho: f64, blocks: Vec<ImplicitBlock>, scale: f64, tol: f64) -> Self {
        Self::with_dense_threshold(v, rho, blocks, scale, tol, IMPLICIT_DENSE_THRESHOLD)
    }

    pub fn with_dense_threshold(
        v: Arc<DMatrix<f64>>,
        rho: f64,
        blocks: Vec<ImplicitBlock>,
        scale: f64,
        tol: f64,
        dense_threshold: usize,
    ) -> Self {
        assert!(!blocks.is_empty(), "implicit operator needs at least one block");
        let mut op = Self { v, rho, blocks: Arc::new(blocks), scale, tol, dense: None };
        if op.dim() <= dense_threshold {
            op.dense = Some(Arc::new(op.materialize()));
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn degree_hint(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| self.series(b).degree())
            .max()
            .unwrap_or(0)
    }

    pub fn trace(&self) -> f64 {
        let t = self.blocks.len() as f64;
        self.scale * self.blocks.iter().map(|b| b.top_trace / b.normalizer).sum::<f64>() / t
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale *= c;
        out.dense = self.dense.as_ref().map(|m| Arc::new(m.as_ref() * c));
        out
    }

    fn psi(&self, x: &DVector<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut vy = &*self.v * y;
        for (i, mut row) in vy.row_iter_mut().enumerate() {
            row *= x[i];
        }
        self.v.tr_mul(&vy) * self.rho
    }

    // exp((Ψ − λ)/2) on [0, λ]; squaring it keeps each term PSD by construction.
    fn series(&self, b: &ImplicitBlock) -> ChebyshevSeries {
        let hi = b.lambda_max.max(1e-12);
        let tol = self.tol.max(1e-15);
        let degree = ((0.75 * hi + 2.0 * (1.0 / tol).ln() + 10.0).ceil() as usize).min(4000);
        ChebyshevSeries::fit_to_tolerance(move |x| ((x - hi) / 2.0).exp(), 0.0, hi, tol, degree)
    }

    /// M·X for a d×m block of vectors.
    pub fn apply_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if let Some(m) = &self.dense {
            return m.as_ref() * x;
        }
        let t = self.blocks.len() as f64;
        let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
        for b in self.blocks.iter() {
            let s = self.series(b);
            let mut op = |y: &DMatrix<f64>| self.psi(&b.x, y);
            let half = s.apply(&mut op, x);
            let full = s.apply(&mut op, &half);
            let coef = (b.lambda_max.max(1e-12) - b.shift).exp() / b.normalizer;
            acc += full * coef;
        }
        acc * (self.scale / t)
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let x = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
        DVector::from_column_slice(self.apply_columns(&x).as_slice())
    }

    /// Dense M through exact eigendecompositions of every Ψₜ.
    pub fn materialize(&self) -> DMatrix<f64> {
        let d = self.dim();
        let t = self.blocks.len() as f64;
        let mut acc = DMatrix::zeros(d, d);
        for b in self.blocks.iter() {
            let psi = weighted_gram(&self.v, &b.x) * self.rho;
            let e = sym_expm(&(psi - DMatrix::identity(d, d) * b.shift));
            acc += e / b.normalizer;
        }
        acc * (self.scale / t)
    }
}
