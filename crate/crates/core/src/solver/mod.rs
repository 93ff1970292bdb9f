//! Approximate solvers for the packing/covering pair, plus an exact oracle.

pub mod chebyshev;
mod implicit;
pub mod lbfgs;
mod mmw;
pub mod power;
mod reference;
mod smoothed;

pub use implicit::{ImplicitBlock, ImplicitPsdOperator, IMPLICIT_DENSE_THRESHOLD};
pub use power::{top_eigenvector, GramOperator, SymmetricOperator};
pub use reference::{
    greedy_primal_1d, reference_primal, reference_solve, ReferencePrimal, ReferenceSolution,
    ReferenceSolver, REFERENCE_MAX_D, REFERENCE_MAX_N,
};

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TAU;
use crate::sdp::{CoveringSolution, PackingInstance, PsdMatrix, FEAS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// L-BFGS on a smoothed low-rank covering objective (default).
    SmoothedCovering,
    /// Primal-dual matrix multiplicative weights.
    Mmw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: Backend,
    /// Target multiplicative accuracy.
    pub tol: f64,
    /// Inner-iteration budget per attempt.
    pub budget: usize,
    pub seed: u64,
    /// Starting rank of the covering factor (smoothed backend).
    pub initial_rank: usize,
    /// Retry cap; derived from the failure budget when unset.
    pub max_retries: Option<usize>,
}

impl SolverConfig {
    pub fn new(tol: f64) -> Self {
        Self {
            backend: Backend::SmoothedCovering,
            tol,
            budget: 20_000,
            seed: 0,
            initial_rank: 16,
            max_retries: None,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// ceil(log₂ log₂(max(d/ε, 4))) + 2.
    pub fn retry_cap(&self, d: usize, eps: f64) -> usize {
        if let Some(r) = self.max_retries {
            return r;
        }
        retry_cap(d, eps)
    }
}

pub fn retry_cap(d: usize, eps: f64) -> usize {
    let ratio = if eps > 0.0 { d as f64 / eps } else { 4.0 };
    (ratio.max(4.0).log2().log2().ceil() as usize) + 2
}

/// Decisive thresholds that allow a solve to stop before reaching tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Packing mass that counts as large (1 − ε/10 in the ρ-search).
    pub packing_target: f64,
    /// Covering value that counts as small; None if only the packing side matters.
    pub covering_target: Option<f64>,
}

impl StopRule {
    /// Whether the verified pair already determines the search decision.
    pub fn decisive(&self, packing: f64, covering: f64) -> bool {
        match self.covering_target {
            None => packing >= self.packing_target || covering < self.packing_target,
            Some(ct) => {
                (packing >= self.packing_target && covering <= ct)
                    || covering < self.packing_target
                    || packing > ct
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub stop: Option<StopRule>,
    /// Starting covering factor L (d×k) for the smoothed backend.
    pub warm_start: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub w_prime: DVector<f64>,
    pub covering: CoveringSolution,
    /// ‖w′‖₁
    pub packing_value: f64,
    /// tr(M′) + ‖y′‖₁
    pub covering_value: f64,
    pub iterations_used: usize,
    pub verified: bool,
    /// Reached the multiplicative tolerance (as opposed to stopping on a decisive rule).
    pub converged: bool,
    /// Final covering factor, for warm starts.
    pub factor: Option<DMatrix<f64>>,
}

impl SolveOutcome {
    /// (covering − packing)/covering
    pub fn relative_gap(&self) -> f64 {
        if self.covering_value <= 0.0 {
            return 0.0;
        }
        (self.covering_value - self.packing_value) / self.covering_value
    }
}

pub trait PositiveSdpSolver: Send + Sync {
    fn tol(&self) -> f64;
    fn solve(&self, inst: &PackingInstance, opts: &SolveOptions) -> Result<SolveOutcome>;
    /// Same solver at a tighter tolerance.
    fn tightened(&self, factor: f64) -> Box<dyn PositiveSdpSolver>;
}

impl PositiveSdpSolver for SolverConfig {
    fn tol(&self) -> f64 {
        self.tol
    }

    fn solve(&self, inst: &PackingInstance, opts: &SolveOptions) -> Result<SolveOutcome> {
        solve_with_retries(inst, self, opts)
    }

    fn tightened(&self, factor: f64) -> Box<dyn PositiveSdpSolver> {
        let mut c = self.clone();
        c.tol *= factor;
        c.budget = (c.budget as f64 / factor.min(1.0)).ceil() as usize;
        Box::new(c)
    }
}

/// One attempt with the configured backend.
pub fn solve_positive_with(inst: &PackingInstance, cfg: &SolverConfig, opts: &SolveOptions) -> Result<SolveOutcome> {
    if !(cfg.tol > 0.0 && cfg.tol < 0.5) {
        return Err(Error::InvalidSpec(format!("solver tolerance {} outside (0, 1/2)", cfg.tol)));
    }
    if cfg.budget == 0 {
        return Err(Error::InvalidSpec("solver budget must be positive".into()));
    }
    if inst.is_degenerate() {
        return degenerate_solution(inst);
    }
    match cfg.backend {
        Backend::SmoothedCovering => smoothed::solve(inst, cfg, opts),
        Backend::Mmw => mmw::solve(inst, cfg, opts),
    }
}

/// Solve at multiplicative tolerance `tol` within `budget` inner iterations.
pub fn solve_positive(inst: &PackingInstance, tol: f64, budget: usize) -> Result<SolveOutcome> {
    let cfg = SolverConfig::new(tol).with_budget(budget);
    solve_with_retries(inst, &cfg, &SolveOptions::default())
}

/// Re-runs retryable failures with a fresh seed and a doubled budget, up to
/// the retry cap.
pub fn solve_with_retries(inst: &PackingInstance, cfg: &SolverConfig, opts: &SolveOptions) -> Result<SolveOutcome> {
    let retries = cfg.retry_cap(inst.dim(), inst.eps());
    let mut attempt_cfg = cfg.clone();
    let mut last = None;
    for attempt in 0..=retries {
        match solve_positive_with(inst, &attempt_cfg, opts) {
            Ok(out) => return Ok(out),
            Err(e) if e.is_retryable() => {
                debug!("solve attempt {attempt} failed: {e}; retrying");
                attempt_cfg.seed = attempt_cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
                attempt_cfg.budget = attempt_cfg.budget.saturating_mul(2);
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Every Xᵢ = ν: only the caps bind, OPT = N·cap = 1/(1−ε).
fn degenerate_solution(inst: &PackingInstance) -> Result<SolveOutcome> {
    let (n, d) = (inst.n(), inst.dim());
    let w = DVector::from_element(n, inst.cap());
    let covering = CoveringSolution::completing(inst, PsdMatrix::Dense(DMatrix::zeros(d, d)));
    finalize(inst, w, covering, 0, true, None)
}

/// Computes both values and re-verifies feasibility of both sides.
pub(crate) fn finalize(
    inst: &PackingInstance,
    w_prime: DVector<f64>,
    covering: CoveringSolution,
    iterations: usize,
    converged: bool,
    factor: Option<DMatrix<f64>>,
) -> Result<SolveOutcome> {
    let pv = inst.packing_violation(&w_prime)?;
    if pv > FEAS_TOL {
        return Err(Error::VerificationFailed(format!("packing violation {pv:e}")));
    }
    let slack = inst.covering_slack(&covering)?;
    if slack < -FEAS_TOL {
        return Err(Error::VerificationFailed(format!("covering slack {slack:e}")));
    }
    let packing_value = w_prime.sum();
    let covering_value = covering.value();
    Ok(SolveOutcome {
        w_prime,
        covering,
        packing_value,
        covering_value,
        iterations_used: iterations,
        verified: true,
        converged,
        factor,
    })
}

/// Failure budget per solve implied by the retry cap: (1/10)^(retries+1) ≤ τ.
pub fn per_solve_failure(d: usize, eps: f64) -> f64 {
    0.1f64.powi(retry_cap(d, eps) as i32 + 1).min(TAU)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_cap_values() {
        // log2(4) = 2, log2(2) = 1
        assert_eq!(retry_cap(1, 0.25), 3);
        // d/ε = 200: log2 ≈ 7.64, log2 of that ≈ 2.93 → 3
        assert_eq!(retry_cap(20, 0.1), 5);
    }

    #[test]
    fn stop_rule_decisions() {
        let primal_only = StopRule { packing_target: 0.99, covering_target: None };
        assert!(primal_only.decisive(0.995, 1.2));
        assert!(primal_only.decisive(0.5, 0.98));
        assert!(!primal_only.decisive(0.98, 1.0));
        let both = StopRule { packing_target: 0.99, covering_target: Some(1.0) };
        assert!(both.decisive(0.995, 0.999));
        assert!(both.decisive(1.01, 1.05));
        assert!(!both.decisive(0.995, 1.01));
    }
}
