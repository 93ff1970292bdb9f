//! The outer loops: certify the current guess through a primal solution, or
//! move it along the top direction of a dual certificate.

use std::sync::Arc;

use log::{debug, info};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baseline::{coordinatewise_median, prune_scaled};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::model::{
    Branch, ConstantSchedule, EstimationReport, IterationRecord, Regime, SampleSet, TerminalCase, WeightVector,
};
use crate::sdp::{
    build_packing, dual_objective, rho_search, DualCertificate, RhoOutcome, SdpContext, SearchOptions,
    DEFAULT_EXACT_THRESHOLD,
};
use crate::solver::{PositiveSdpSolver, SolveOptions, SolverConfig};

/// Multiplier in the assumed initial radius C_med·ε·√d of the median.
pub const C_MED: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GuessState {
    pub nu: DVector<f64>,
    /// Estimated ‖ν − μ*‖ from the last dual value.
    pub r_hat: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuUpdate {
    pub v1: DVector<f64>,
    pub r_prime: f64,
    pub chosen_sign: i8,
    pub nu_next: DVector<f64>,
    /// Covering values at ν + r′v₁ and ν − r′v₁.
    pub plus_value: f64,
    pub minus_value: f64,
    pub sdp_calls: usize,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Solver settings; the tolerance defaults to ε/30 when unset.
    pub solver: Option<SolverConfig>,
    pub c_med: f64,
    pub seed: u64,
    /// Starting guess in sample units; the coordinatewise median when unset.
    pub initial_nu: Option<Vec<f64>>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { solver: None, c_med: C_MED, seed: 0, initial_nu: None }
    }
}

impl EstimatorOptions {
    pub fn solver_config(&self, eps: f64) -> SolverConfig {
        self.solver.clone().unwrap_or_else(|| SolverConfig::new(eps / 30.0).with_seed(self.seed))
    }
}

fn top_direction(cert: &DualCertificate, seed: u64) -> Result<DVector<f64>> {
    let v = if cert.dim() <= DEFAULT_EXACT_THRESHOLD {
        let (_, vecs) = sym_eigen_desc(&cert.matrix.to_dense());
        vecs.column(0).into_owned()
    } else {
        cert.top_eigenvector(1e-3, seed)?.0
    };
    Ok(&v / v.norm())
}

fn step_length(v: f64, regime: Regime) -> f64 {
    match regime {
        Regime::SubGaussian => (v - 1.0).max(0.0).sqrt(),
        Regime::BoundedCovariance => v.max(0.0).sqrt(),
    }
}

/// Moves ν by r′ along ±v₁, choosing the sign whose packing problem at the same
/// ρ has the larger value (equivalently the smaller primal optimum).
pub fn update_guess(
    state: &GuessState,
    cert: &DualCertificate,
    ctx: &SdpContext,
    schedule: &ConstantSchedule,
    solver: &dyn PositiveSdpSolver,
) -> Result<NuUpdate> {
    let ctx = ctx.with_nu(state.nu.clone())?;
    if ctx.rho().is_none() {
        return Err(Error::RhoOutOfRange(f64::NAN));
    }
    let value = dual_objective(&ctx, cert)?;
    let v1 = top_direction(cert, state.iteration as u64)?;
    let r_prime = step_length(value, schedule.regime);
    let plus = &state.nu + &v1 * r_prime;
    let minus = &state.nu - &v1 * r_prime;

    let mut calls = 0;
    let mut iters = 0;
    let mut current: Box<dyn PositiveSdpSolver> = solver.tightened(1.0);
    let solve_at = |nu: &DVector<f64>, solver: &dyn PositiveSdpSolver| -> Result<(f64, usize)> {
        let inst = build_packing(&ctx.with_nu(nu.clone())?)?;
        let out = solver.solve(&inst, &SolveOptions::default())?;
        Ok((out.covering_value, out.iterations_used))
    };
    for attempt in 0..2 {
        let cur: &dyn PositiveSdpSolver = &*current;
        let (f, p) = (&solve_at, &plus);
        let (a, b) = std::thread::scope(|s| {
            let h = s.spawn(move || f(p, cur));
            let b = solve_at(&minus, cur);
            (h.join().expect("candidate solve panicked"), b)
        });
        let (pa, ia) = a?;
        let (pb, ib) = b?;
        calls += 2;
        iters += ia + ib;
        debug!("candidates: plus={pa:.6} minus={pb:.6} r'={r_prime:.4}");
        if (pa - pb).abs() >= current.tol() * pa.max(pb) {
            let sign: i8 = if pa > pb { 1 } else { -1 };
            let nu_next = if sign > 0 { plus } else { minus };
            return Ok(NuUpdate {
                v1,
                r_prime,
                chosen_sign: sign,
                nu_next,
                plus_value: pa,
                minus_value: pb,
                sdp_calls: calls,
                solver_iterations: iters,
            });
        }
        if attempt == 0 {
            current = current.tightened(1.0 / 3.0);
        } else {
            return Err(Error::Ambiguous { plus: pa, minus: pb });
        }
    }
    unreachable!("loop returns on its second pass")
}

struct LoopResult {
    mu: DVector<f64>,
    terminal: TerminalCase,
    verified: Option<f64>,
    trace: Vec<IterationRecord>,
    sdp_calls: usize,
    solver_iterations: usize,
    budget: usize,
}

/// ν + Σ wᵢ(Xᵢ − ν), which is exact when every sample equals ν.
fn centered_mean(ctx: &SdpContext, w: &WeightVector) -> DVector<f64> {
    ctx.nu() + ctx.centered().tr_mul(w.as_vector())
}

fn run_loop(
    samples: Arc<SampleSet>,
    eps: f64,
    schedule: &ConstantSchedule,
    nu0: DVector<f64>,
    solver: &dyn PositiveSdpSolver,
    c_med: f64,
) -> Result<LoopResult> {
    let d = samples.dim();
    let budget = schedule.iteration_budget(d, c_med);
    let mut state = GuessState { nu: nu0, r_hat: 0.0, iteration: 0 };
    let mut trace = Vec::new();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let (mut calls, mut iters) = (0, 0);
    let base = SdpContext::new(samples, state.nu.clone(), eps)?;

    let keep = |best: &mut Option<(f64, DVector<f64>)>, obj: f64, mu: DVector<f64>| {
        if best.as_ref().map(|(b, _)| obj < *b).unwrap_or(true) {
            *best = Some((obj, mu));
        }
    };

    while state.iteration < budget {
        let ctx = base.with_nu(state.nu.clone())?;
        let res = rho_search(&ctx, schedule, solver, &SearchOptions::default())?;
        calls += res.sdp_calls;
        iters += res.solver_iterations;
        let mut rec = IterationRecord {
            iteration: state.iteration,
            nu: state.nu.iter().copied().collect(),
            branch: Branch::Primal,
            primal_objective: None,
            dual_objective: None,
            rho: res.rho,
            r_hat: None,
            chosen_sign: None,
            nu_next: None,
            sdp_calls: res.sdp_calls,
            solver_iterations: res.solver_iterations,
        };
        match res.outcome {
            RhoOutcome::GoodPrimal { w, objective } => {
                rec.primal_objective = Some(objective);
                trace.push(rec);
                let mu = centered_mean(&ctx, &w);
                if objective <= schedule.threshold_primal() {
                    info!("primal accepted at iteration {} with objective {objective:.6}", state.iteration);
                    return Ok(LoopResult {
                        mu,
                        terminal: TerminalCase::PrimalAccepted,
                        verified: Some(objective),
                        trace,
                        sdp_calls: calls,
                        solver_iterations: iters,
                        budget,
                    });
                }
                // No certificate to move along; stop with the candidate.
                keep(&mut best, objective, mu);
                break;
            }
            RhoOutcome::GoodDual { certificate, objective, primal_candidate, .. } => {
                rec.branch = Branch::Dual;
                rec.dual_objective = Some(objective);
                if let Some((w, p)) = primal_candidate {
                    rec.primal_objective = Some(p);
                    keep(&mut best, p, centered_mean(&ctx, &w));
                }
                let ctx_rho = ctx.with_rho(res.rho)?;
                let up = update_guess(&state, &certificate, &ctx_rho, schedule, solver)?;
                calls += up.sdp_calls;
                iters += up.solver_iterations;
                rec.sdp_calls += up.sdp_calls;
                rec.solver_iterations += up.solver_iterations;
                rec.r_hat = Some(up.r_prime);
                rec.chosen_sign = Some(up.chosen_sign);
                rec.nu_next = Some(up.nu_next.iter().copied().collect());
                debug!(
                    "iteration {}: dual {objective:.6} r'={:.4} sign={}",
                    state.iteration, up.r_prime, up.chosen_sign
                );
                trace.push(rec);
                state = GuessState { nu: up.nu_next, r_hat: up.r_prime, iteration: state.iteration + 1 };
            }
        }
    }
    let (verified, mu) = match best {
        Some((obj, mu)) => (Some(obj), mu),
        None => (None, state.nu),
    };
    info!("iteration budget {budget} exhausted");
    Ok(LoopResult {
        mu,
        terminal: TerminalCase::IterationBudgetExhausted,
        verified,
        trace,
        sdp_calls: calls,
        solver_iterations: iters,
        budget,
    })
}

fn check_inputs(samples: &SampleSet, eps: f64, schedule: &ConstantSchedule, regime: Regime) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(Error::EpsOutOfRange(eps));
    }
    if samples.n() < 2 {
        return Err(Error::EmptyInput);
    }
    if schedule.regime != regime {
        return Err(Error::InvalidSpec(format!("schedule is for the {} regime", schedule.regime)));
    }
    Ok(())
}

fn initial_guess(samples: &SampleSet, opts: &EstimatorOptions, sigma: f64) -> Result<DVector<f64>> {
    match &opts.initial_nu {
        Some(nu) => {
            if nu.len() != samples.dim() {
                return Err(Error::DimensionMismatch { expected: samples.dim(), found: nu.len() });
            }
            Ok(DVector::from_iterator(nu.len(), nu.iter().map(|x| x / sigma)))
        }
        None => coordinatewise_median(samples),
    }
}

fn report(out: LoopResult, schedule: &ConstantSchedule, pruned: Option<usize>) -> EstimationReport {
    EstimationReport {
        mu_hat: out.mu,
        iterations: out.trace.len(),
        terminal_case: out.terminal,
        sdp_calls: out.sdp_calls,
        solver_iterations: out.solver_iterations,
        error_vs_truth: None,
        schedule: schedule.clone(),
        verified_primal_objective: out.verified,
        budget: out.budget,
        pruned_count: pruned,
        trace: out.trace,
    }
}

pub fn estimate_subgaussian(samples: &SampleSet, eps: f64, schedule: &ConstantSchedule) -> Result<EstimationReport> {
    estimate_subgaussian_with(samples, eps, schedule, &EstimatorOptions::default())
}

pub fn estimate_subgaussian_with(
    samples: &SampleSet,
    eps: f64,
    schedule: &ConstantSchedule,
    opts: &EstimatorOptions,
) -> Result<EstimationReport> {
    let solver = opts.solver_config(eps);
    estimate_subgaussian_using(samples, eps, schedule, &solver, opts)
}

/// Same loop with an arbitrary packing solver.
pub fn estimate_subgaussian_using(
    samples: &SampleSet,
    eps: f64,
    schedule: &ConstantSchedule,
    solver: &dyn PositiveSdpSolver,
    opts: &EstimatorOptions,
) -> Result<EstimationReport> {
    check_inputs(samples, eps, schedule, Regime::SubGaussian)?;
    let nu0 = initial_guess(samples, opts, 1.0)?;
    let out = run_loop(Arc::new(samples.clone()), eps, schedule, nu0, solver, opts.c_med)?;
    Ok(report(out, schedule, None))
}

pub fn estimate_bounded_cov(
    samples_2n: &SampleSet,
    eps: f64,
    sigma: f64,
    schedule: &ConstantSchedule,
) -> Result<EstimationReport> {
    estimate_bounded_cov_with(samples_2n, eps, sigma, schedule, &EstimatorOptions::default())
}

pub fn estimate_bounded_cov_with(
    samples_2n: &SampleSet,
    eps: f64,
    sigma: f64,
    schedule: &ConstantSchedule,
    opts: &EstimatorOptions,
) -> Result<EstimationReport> {
    let solver = opts.solver_config(eps);
    estimate_bounded_cov_using(samples_2n, eps, sigma, schedule, &solver, opts)
}

/// Rescales by 1/σ, prunes the second half around the median of the first,
/// runs the loop on the pruned half and scales the result back.
pub fn estimate_bounded_cov_using(
    samples_2n: &SampleSet,
    eps: f64,
    sigma: f64,
    schedule: &ConstantSchedule,
    solver: &dyn PositiveSdpSolver,
    opts: &EstimatorOptions,
) -> Result<EstimationReport> {
    check_inputs(samples_2n, eps, schedule, Regime::BoundedCovariance)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSpec(format!("sigma must be positive, got {sigma}")));
    }
    // Divide rather than multiply by 1/σ so that σ·X maps back to X bit for bit.
    let scaled = SampleSet::new(samples_2n.data() / sigma)?;
    let (a, b) = scaled.split_halves()?;
    let pr = prune_scaled(&a, &b, eps, 1.0)?;
    let nu0 = initial_guess(&pr.pruned, opts, sigma)?;
    let mut out = run_loop(Arc::new(pr.pruned), eps, schedule, nu0, solver, opts.c_med)?;
    out.mu *= sigma;
    for rec in &mut out.trace {
        rec.nu.iter_mut().for_each(|x| *x *= sigma);
        if let Some(n) = rec.nu_next.as_mut() {
            n.iter_mut().for_each(|x| *x *= sigma);
        }
        rec.r_hat = rec.r_hat.map(|r| r * sigma);
    }
    Ok(report(out, schedule, Some(pr.replaced_count)))
}
