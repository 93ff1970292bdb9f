//! The primal/dual SDP pair at a guess ν and its packing/covering form.

mod convert;
mod search;

pub use convert::{convert_dual, convert_primal};
pub use search::{rho_search, RhoOutcome, SearchOptions, SearchResult, SearchStep, StepDecision};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, stage_rng};
use crate::model::{box_cap, SampleSet, WeightVector};
use crate::solver::power::{top_eigenvector, GramOperator, SymmetricOperator};
use crate::solver::ImplicitPsdOperator;

/// Dimension up to which spectral quantities are computed by a dense eigensolve.
pub const DEFAULT_EXACT_THRESHOLD: usize = 128;
/// Dimension up to which feasibility is verified by a dense eigensolve.
pub const VERIFY_DENSE_THRESHOLD: usize = 512;
/// Slack allowed by feasibility verification.
pub const FEAS_TOL: f64 = 1e-6;
/// Relative accuracy of the power method where it replaces a dense solve.
pub const POWER_TOL: f64 = 0.01;

/// Samples, guess ν, contamination level and optional packing scale ρ.
#[derive(Debug, Clone)]
pub struct SdpContext {
    samples: Arc<SampleSet>,
    centered: Arc<DMatrix<f64>>,
    nu: DVector<f64>,
    eps: f64,
    rho: Option<f64>,
}

impl SdpContext {
    pub fn new(samples: Arc<SampleSet>, nu: DVector<f64>, eps: f64) -> Result<Self> {
        // ε = 0 is allowed here so the uncorrupted packing problem can be posed.
        if !(eps >= 0.0 && eps < 1.0 / 3.0) {
            return Err(Error::EpsOutOfRange(eps));
        }
        let centered = Arc::new(samples.centered(&nu)?);
        Ok(Self { samples, centered, nu, eps, rho: None })
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::RhoOutOfRange(rho));
        }
        Ok(Self { rho: Some(rho), ..self.clone() })
    }

    pub fn with_nu(&self, nu: DVector<f64>) -> Result<Self> {
        let centered = Arc::new(self.samples.centered(&nu)?);
        Ok(Self { centered, nu, ..self.clone() })
    }

    pub fn samples(&self) -> &Arc<SampleSet> {
        &self.samples
    }
    /// N×d matrix with rows Xᵢ − ν.
    pub fn centered(&self) -> &DMatrix<f64> {
        &self.centered
    }
    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn rho(&self) -> Option<f64> {
        self.rho
    }
    pub fn n(&self) -> usize {
        self.samples.n()
    }
    pub fn dim(&self) -> usize {
        self.samples.dim()
    }
    /// 1/((1−ε)N)
    pub fn cap(&self) -> f64 {
        box_cap(self.n(), self.eps)
    }
}

/// PSD matrix in one of three storage forms.
#[derive(Debug, Clone)]
pub enum PsdMatrix {
    Dense(DMatrix<f64>),
    /// L Lᵀ for a d×k factor L.
    LowRank(DMatrix<f64>),
    Implicit(ImplicitPsdOperator),
}

impl PsdMatrix {
    pub fn dim(&self) -> usize {
        match self {
            PsdMatrix::Dense(m) => m.nrows(),
            PsdMatrix::LowRank(l) => l.nrows(),
            PsdMatrix::Implicit(op) => op.dim(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            PsdMatrix::Dense(m) => m.trace(),
            PsdMatrix::LowRank(l) => l.norm_squared(),
            PsdMatrix::Implicit(op) => op.trace(),
        }
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            PsdMatrix::Dense(m) => m * u,
            PsdMatrix::LowRank(l) => l * l.tr_mul(u),
            PsdMatrix::Implicit(op) => op.apply(u),
        }
    }

    /// vᵢᵀ M vᵢ for every row vᵢ of V.
    pub fn quad_forms(&self, v: &DMatrix<f64>) -> DVector<f64> {
        match self {
            PsdMatrix::Dense(m) => linalg::quad_forms(v, m),
            PsdMatrix::LowRank(l) => linalg::row_norms_sq(&(v * l)),
            PsdMatrix::Implicit(op) => {
                let mv = op.apply_columns(&v.transpose());
                linalg::row_dots(&mv.transpose(), v)
            }
        }
    }

    pub fn scaled(&self, c: f64) -> PsdMatrix {
        assert!(c >= 0.0);
        match self {
            PsdMatrix::Dense(m) => PsdMatrix::Dense(m * c),
            PsdMatrix::LowRank(l) => PsdMatrix::LowRank(l * c.sqrt()),
            PsdMatrix::Implicit(op) => PsdMatrix::Implicit(op.scaled(c)),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            PsdMatrix::Dense(m) => m.clone(),
            PsdMatrix::LowRank(l) => l * l.transpose(),
            PsdMatrix::Implicit(op) => op.materialize(),
        }
    }
}

impl SymmetricOperator for PsdMatrix {
    fn dim(&self) -> usize {
        PsdMatrix::dim(self)
    }
    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        PsdMatrix::apply(self, u)
    }
}

/// Trace-one PSD matrix M certifying a lower bound on the primal value.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub matrix: PsdMatrix,
    pub trace_bound: f64,
}

impl DualCertificate {
    pub fn explicit(m: DMatrix<f64>) -> Self {
        let t = m.trace();
        Self { matrix: PsdMatrix::Dense(m), trace_bound: t }
    }

    /// Normalizes to trace one.
    pub fn normalized(m: &PsdMatrix) -> Result<Self> {
        let t = m.trace();
        if !(t >= 1e-12) {
            return Err(Error::ZeroMatrix(t));
        }
        let matrix = m.scaled(1.0 / t);
        Ok(Self { trace_bound: matrix.trace(), matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Top eigenpair by power iteration.
    pub fn top_eigenvector(&self, relative_tol: f64, seed: u64) -> Result<(DVector<f64>, f64)> {
        top_eigenvector(&self.matrix, relative_tol, seed)
    }

    /// Random-probe checks: trace, symmetry and PSD. Returns the first failure.
    pub fn hygiene(&self, probes: usize, seed: u64) -> std::result::Result<(), String> {
        if self.trace_bound > 1.0 + 1e-8 {
            return Err(format!("trace {} exceeds 1", self.trace_bound));
        }
        let d = self.dim();
        let mut rng = stage_rng(seed, 0);
        for _ in 0..probes {
            let u = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let v = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let (mu, mv) = (self.matrix.apply(&u), self.matrix.apply(&v));
            let (a, b) = (v.dot(&mu), u.dot(&mv));
            let scale = a.abs().max(b.abs()).max(1e-300);
            if (a - b).abs() > 1e-8 * scale.max(u.norm() * v.norm() * self.trace_bound) {
                return Err(format!("asymmetric probe: {a} vs {b}"));
            }
            let q = v.dot(&mv);
            if q < -1e-8 * v.norm_squared() {
                return Err(format!("negative probe {q}"));
            }
        }
        Ok(())
    }
}

/// (M′, y′) for the covering form.
#[derive(Debug, Clone)]
pub struct CoveringSolution {
    pub m_prime: PsdMatrix,
    pub y_prime: DVector<f64>,
}

impl CoveringSolution {
    /// Pairs M′ with the cheapest feasible y′ᵢ = cap·(1 − ρqᵢ)₊.
    pub fn completing(inst: &PackingInstance, m_prime: PsdMatrix) -> Self {
        let q = m_prime.quad_forms(inst.centered());
        let cap = inst.cap();
        let rho = inst.rho();
        let y_prime = q.map(|qi| cap * (1.0 - rho * qi).max(0.0));
        Self { m_prime, y_prime }
    }

    /// tr(M′) + ‖y′‖₁
    pub fn value(&self) -> f64 {
        self.m_prime.trace() + self.y_prime.sum()
    }
}

/// The packing SDP at (ν, ε, ρ). Each Aᵢ = CᵢCᵢᵀ is kept implicit through the
/// centered rows and the scalars ρ and (1−ε)N.
#[derive(Debug, Clone)]
pub struct PackingInstance {
    context: SdpContext,
}

impl PackingInstance {
    pub fn context(&self) -> &SdpContext {
        &self.context
    }
    pub fn centered(&self) -> &DMatrix<f64> {
        self.context.centered()
    }
    pub fn rho(&self) -> f64 {
        self.context.rho.expect("packing instances always carry rho")
    }
    pub fn eps(&self) -> f64 {
        self.context.eps
    }
    pub fn n(&self) -> usize {
        self.context.n()
    }
    pub fn dim(&self) -> usize {
        self.context.dim()
    }
    pub fn cap(&self) -> f64 {
        self.context.cap()
    }

    /// Factor row of Cᵢ in the top block, √ρ·(Xᵢ−ν).
    pub fn top_factor(&self, i: usize) -> DVector<f64> {
        self.centered().row(i).transpose() * self.rho().sqrt()
    }

    /// Bottom-block factor scale √((1−ε)N); Cᵢ's bottom part is this times eᵢ.
    pub fn bottom_factor(&self) -> f64 {
        ((1.0 - self.eps()) * self.n() as f64).sqrt()
    }

    /// Whether every Xᵢ equals ν, so the top block vanishes.
    pub fn is_degenerate(&self) -> bool {
        self.centered().iter().all(|x| *x == 0.0)
    }

    /// Largest eigenvalue of ρ·Σ wᵢ(Xᵢ−ν)(Xᵢ−ν)ᵀ.
    pub fn top_block_lambda_max(&self, w: &DVector<f64>) -> Result<f64> {
        let v = self.centered();
        if self.dim() <= VERIFY_DENSE_THRESHOLD {
            Ok(self.rho() * linalg::lambda_max(&linalg::weighted_gram(v, w)))
        } else {
            let op = GramOperator::new(v, w, self.rho());
            let (_, lam) = top_eigenvector(&op, POWER_TOL, 0x7e51)?;
            // The power estimate may be low by the relative tolerance.
            Ok(lam / (1.0 - POWER_TOL))
        }
    }

    /// Feasibility violation of w′: max of top-block overshoot and relative
    /// cap overshoot (≤ 0 means feasible).
    pub fn packing_violation(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: w.len() });
        }
        let neg = w.iter().fold(0.0f64, |m, x| m.max(-x));
        let cap = self.cap();
        let over = w.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x / cap - 1.0));
        let top = self.top_block_lambda_max(w)? - 1.0;
        Ok(neg.max(over).max(top))
    }

    /// Smallest covering slack ρqᵢ + (1−ε)N y′ᵢ − 1, or −∞ for negative y′.
    pub fn covering_slack(&self, cov: &CoveringSolution) -> Result<f64> {
        if cov.y_prime.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: cov.y_prime.len() });
        }
        if cov.m_prime.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: cov.m_prime.dim() });
        }
        if cov.y_prime.iter().any(|y| *y < 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let q = cov.m_prime.quad_forms(self.centered());
        let scale = (1.0 - self.eps()) * self.n() as f64;
        let rho = self.rho();
        Ok((0..self.n())
            .map(|i| rho * q[i] + scale * cov.y_prime[i] - 1.0)
            .fold(f64::INFINITY, f64::min))
    }
}

pub fn build_packing(ctx: &SdpContext) -> Result<PackingInstance> {
    let rho = ctx.rho.ok_or(Error::RhoOutOfRange(f64::NAN))?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(PackingInstance { context: ctx.clone() })
}

/// λ_max(Σ wᵢ(Xᵢ−ν)(Xᵢ−ν)ᵀ), dense up to the default exact threshold.
pub fn primal_objective(ctx: &SdpContext, w: &WeightVector) -> Result<f64> {
    primal_objective_with(ctx, w, DEFAULT_EXACT_THRESHOLD)
}

pub fn primal_objective_with(ctx: &SdpContext, w: &WeightVector, exact_threshold: usize) -> Result<f64> {
    if w.len() != ctx.n() {
        return Err(Error::DimensionMismatch { expected: ctx.n(), found: w.len() });
    }
    let v = ctx.centered();
    if ctx.dim() <= exact_threshold {
        Ok(linalg::lambda_max(&linalg::weighted_gram(v, w.as_vector())).max(0.0))
    } else {
        let op = GramOperator::new(v, w.as_vector(), 1.0);
        Ok(top_eigenvector(&op, POWER_TOL, 0x0b1e)?.1)
    }
}

/// min over Δ_{N,ε} of Σ wᵢqᵢ: the mean of the smallest (1−ε)N values, with
/// a fractional weight on the last one when (1−ε)N is not an integer.
pub fn trimmed_mean(q: &[f64], eps: f64) -> f64 {
    let n = q.len();
    let m = (1.0 - eps) * n as f64;
    let rounded = m.round();
    let m = if (m - rounded).abs() < 1e-9 { rounded } else { m };
    let full = (m.floor() as usize).min(n);
    let frac = m - full as f64;
    let take = if frac > 0.0 { full + 1 } else { full }.max(1);
    let mut buf = q.to_vec();
    if take < n {
        buf.select_nth_unstable_by(take - 1, |a, b| a.total_cmp(b));
    }
    let mut head = buf[..take].to_vec();
    head.sort_by(|a, b| a.total_cmp(b));
    let whole: f64 = head[..full.min(take)].iter().sum();
    let last = if frac > 0.0 { frac * head[take - 1] } else { 0.0 };
    (whole + last) / m
}

/// Dual objective of a certificate: trimmed mean of qᵢ = (Xᵢ−ν)ᵀM(Xᵢ−ν).
pub fn dual_objective(ctx: &SdpContext, cert: &DualCertificate) -> Result<f64> {
    if cert.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch { expected: ctx.dim(), found: cert.dim() });
    }
    if cert.trace_bound > 1.0 + 1e-8 {
        return Err(Error::TraceBudgetExceeded(cert.trace_bound));
    }
    let q = cert.matrix.quad_forms(ctx.centered());
    Ok(trimmed_mean(q.as_slice(), ctx.eps()))
}
