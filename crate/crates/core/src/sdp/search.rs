//! Search over the packing scale ρ for a primal or dual outcome.
//!
//! OPT of the packing form is non-increasing in ρ, so a packing value below
//! the target band means ρ is too large and a covering value above 1 means it
//! is too small.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConstantSchedule, WeightVector};
use crate::solver::{PositiveSdpSolver, SolveOptions, SolveOutcome, StopRule};

use super::{
    build_packing, convert_dual, convert_primal, dual_objective, primal_objective, DualCertificate,
    SdpContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDecision {
    AcceptPrimal,
    AcceptDual,
    /// Packing value below target: ρ_hi = ρ.
    LowerRho,
    /// Covering value above 1: ρ_lo = ρ.
    RaiseRho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub rho: f64,
    pub packing: f64,
    pub covering: f64,
    pub decision: StepDecision,
}

#[derive(Debug, Clone)]
pub enum RhoOutcome {
    GoodPrimal {
        w: WeightVector,
        objective: f64,
    },
    GoodDual {
        certificate: DualCertificate,
        /// Exactly evaluated dual objective.
        objective: f64,
        /// (1 − ‖y′‖₁)/(ρ·tr M′), a lower bound on `objective`.
        bound: f64,
        /// Converted primal weights from the same solve, with their objective.
        primal_candidate: Option<(WeightVector, f64)>,
    },
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub outcome: RhoOutcome,
    /// ρ of the deciding solve.
    pub rho: f64,
    pub steps: Vec<SearchStep>,
    pub sdp_calls: usize,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    /// Overrides the bisection budget ceil(log₂(d/ε)) + 8.
    pub max_steps: Option<usize>,
}

pub fn step_budget(d: usize, eps: f64) -> usize {
    ((d as f64 / eps).log2().ceil().max(0.0) as usize) + 8
}

struct Tally {
    steps: Vec<SearchStep>,
    calls: usize,
    iters: usize,
}

impl Tally {
    fn solve(
        &mut self,
        ctx: &SdpContext,
        rho: f64,
        solver: &dyn PositiveSdpSolver,
        opts: &SolveOptions,
    ) -> Result<(SdpContext, SolveOutcome)> {
        let c = ctx.with_rho(rho)?;
        let inst = build_packing(&c)?;
        let out = solver.solve(&inst, opts)?;
        self.calls += 1;
        self.iters += out.iterations_used;
        Ok((c, out))
    }

    fn record(&mut self, rho: f64, out: &SolveOutcome, decision: StepDecision) {
        debug!(
            "rho={rho:.6e} packing={:.6} covering={:.6} -> {decision:?}",
            out.packing_value, out.covering_value
        );
        self.steps.push(SearchStep { rho, packing: out.packing_value, covering: out.covering_value, decision });
    }

    fn finish(self, outcome: RhoOutcome, rho: f64) -> SearchResult {
        SearchResult { outcome, rho, steps: self.steps, sdp_calls: self.calls, solver_iterations: self.iters }
    }
}

fn primal_of(ctx: &SdpContext, out: &SolveOutcome) -> Result<(WeightVector, f64)> {
    // Packing mass can reach 1/(1−ε); scaling down keeps feasibility and the direction.
    let mass = out.w_prime.sum();
    let wp = WeightVector::near_feasible(&out.w_prime / mass.max(1.0), ctx.eps())?;
    let w = convert_primal(ctx, &wp)?;
    let obj = primal_objective(ctx, &w)?;
    Ok((w, obj))
}

/// Runs the search on a context without ρ.
pub fn rho_search(
    ctx: &SdpContext,
    schedule: &ConstantSchedule,
    solver: &dyn PositiveSdpSolver,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let eps = ctx.eps();
    let target = 1.0 - eps / 10.0;
    let mut tally = Tally { steps: Vec::new(), calls: 0, iters: 0 };

    let first = SolveOptions { stop: Some(StopRule { packing_target: target, covering_target: None }), warm_start: None };
    let (c1, out) = tally.solve(ctx, 1.0, solver, &first)?;
    if out.packing_value >= target {
        let (w, objective) = primal_of(&c1, &out)?;
        tally.record(1.0, &out, StepDecision::AcceptPrimal);
        return Ok(tally.finish(RhoOutcome::GoodPrimal { w, objective }, 1.0));
    }
    tally.record(1.0, &out, StepDecision::LowerRho);

    let u = primal_objective(ctx, &WeightVector::uniform(ctx.n()))?;
    let mut lo = if u > 0.0 { (1.0 / (2.0 * u)).min(1.0) } else { 1.0 };
    let mut hi = 1.0f64;
    let budget = opts.max_steps.unwrap_or_else(|| step_budget(ctx.dim(), eps));
    let mut warm: Option<(DMatrix<f64>, f64)> = out.factor.clone().map(|f| (f, 1.0));
    let both = StopRule { packing_target: target, covering_target: Some(1.0) };

    for _ in 0..budget {
        let rho = (lo * hi).sqrt();
        let warm_start = warm.as_ref().map(|(f, r)| f * (r / rho).sqrt());
        let (c, out) = tally.solve(ctx, rho, solver, &SolveOptions { stop: Some(both), warm_start })?;
        if let Some(f) = out.factor.clone() {
            warm = Some((f, rho));
        }
        if out.packing_value < target {
            tally.record(rho, &out, StepDecision::LowerRho);
            hi = rho;
            continue;
        }
        if out.covering_value > 1.0 {
            tally.record(rho, &out, StepDecision::RaiseRho);
            lo = rho;
            continue;
        }
        let (w, primal) = primal_of(&c, &out)?;
        if primal <= schedule.threshold_primal() {
            tally.record(rho, &out, StepDecision::AcceptPrimal);
            return Ok(tally.finish(RhoOutcome::GoodPrimal { w, objective: primal }, rho));
        }
        let (certificate, bound) = convert_dual(&c, &out.covering)?;
        let objective = dual_objective(&c, &certificate)?;
        if objective < schedule.threshold_dual() {
            warn!(
                "dual objective {objective:.6} below threshold {:.6} with primal {primal:.6}",
                schedule.threshold_dual()
            );
        }
        tally.record(rho, &out, StepDecision::AcceptDual);
        let outcome = RhoOutcome::GoodDual { certificate, objective, bound, primal_candidate: Some((w, primal)) };
        return Ok(tally.finish(outcome, rho));
    }
    Err(Error::SearchExhausted { steps: budget, lo, hi })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DVector;

    use super::*;
    use crate::model::{build_constants, ConstantOverrides, Regime, SampleSet};
    use crate::solver::SolverConfig;

    #[test]
    fn budget_formula() {
        assert_eq!(step_budget(20, 0.1), 8 + 8);
        assert_eq!(step_budget(1, 0.5), 1 + 8);
    }

    #[test]
    fn degenerate_accepts_primal_with_zero_objective() {
        let s = Arc::new(SampleSet::from_rows(&vec![vec![1.5, -2.0]; 12]).unwrap());
        let ctx = SdpContext::new(s, DVector::from_vec(vec![1.5, -2.0]), 0.1).unwrap();
        let sched = build_constants(0.1, Regime::SubGaussian, &ConstantOverrides::new()).unwrap();
        let r = rho_search(&ctx, &sched, &SolverConfig::new(0.1 / 30.0), &SearchOptions::default()).unwrap();
        match r.outcome {
            RhoOutcome::GoodPrimal { objective, .. } => assert_eq!(objective, 0.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(r.steps.len(), 1);
    }
}
