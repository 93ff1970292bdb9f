use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use robust_mean::baseline::{coordinatewise_median, empirical_mean};
use robust_mean::contamination::{generate, read_dataset, read_sidecar, GeneratorSpec};
use robust_mean::estimator::{estimate_bounded_cov_using, estimate_subgaussian_using};
use robust_mean::model::Branch;
use robust_mean::solver::{ReferenceSolver, SolverConfig, REFERENCE_MAX_N};
use robust_mean::{
    ConstantSchedule, EstimationReport, EstimatorOptions, GroundTruth, Regime, SampleSet, TerminalCase,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::Summary;
use crate::CliError;

pub const ROBUST: &str = "robust";
pub const ROBUST_EXACT: &str = "robust_exact";
pub const MEAN: &str = "empirical_mean";
pub const MEDIAN: &str = "coordinatewise_median";

/// One estimator's result on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: String,
    /// ‖μ̂ − μ*‖₂, or null without ground truth.
    pub error: Option<f64>,
    pub wall_ms: f64,
    pub iterations: usize,
    pub sdp_calls: usize,
    pub solver_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_case: Option<TerminalCase>,
    /// Branch taken at each outer iteration, `P` or `D`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branches: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub mu_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Primal objective of the returned weights, re-evaluated exactly.
    pub primal_objective: Option<f64>,
    pub threshold: f64,
    /// The re-evaluated objective is at or below the acceptance threshold.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub results: Vec<EstimatorResult>,
    pub constants: [f64; 7],
}

impl SeedRecord {
    pub fn result(&self, estimator: &str) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.estimator == estimator)
    }
}

pub struct SeedRun {
    pub record: SeedRecord,
    /// Full estimator output, kept in memory for callers that inspect traces.
    pub robust: Option<EstimationReport>,
    pub truth: Option<GroundTruth>,
}

pub struct Experiment {
    pub config: RunConfig,
    pub schedule: ConstantSchedule,
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

impl Experiment {
    pub fn records(&self) -> impl Iterator<Item = &SeedRecord> {
        self.runs.iter().map(|r| &r.record)
    }

    pub fn failures(&self) -> usize {
        self.records().flat_map(|r| &r.results).filter(|r| r.failure.is_some()).count()
    }
}

/// Loads a dataset and its ground-truth sidecar, if one sits next to it.
pub fn load_dataset(path: &Path) -> Result<(SampleSet, Option<GroundTruth>), CliError> {
    let samples = read_dataset(path)?;
    let truth = read_sidecar(path)?.map(|s| s.truth);
    if let Some(t) = &truth {
        if t.good_mask.len() != samples.n() || t.mu_star.len() != samples.dim() {
            return Err(CliError::Config(format!("sidecar of {} does not match the dataset shape", path.display())));
        }
    }
    Ok((samples, truth))
}

/// The generator spec a config draws for one seed.
pub fn generator_for(config: &RunConfig, seed: u64) -> GeneratorSpec {
    match config.mode {
        Regime::SubGaussian => GeneratorSpec::gaussian(config.draw_count(), config.d, seed),
        Regime::BoundedCovariance => GeneratorSpec::bounded(config.draw_count(), config.d, config.sigma, seed),
    }
}

pub fn samples_for(config: &RunConfig, seed: u64) -> Result<(SampleSet, Option<GroundTruth>), CliError> {
    match &config.dataset {
        Some(path) => load_dataset(path),
        None => {
            let (s, t) = generate(&generator_for(config, seed), &config.adversary)?;
            Ok((s, Some(t)))
        }
    }
}

/// Runs every seed, at most `jobs` at a time, and collects the records in seed order.
pub fn run_experiment(config: &RunConfig, jobs: usize) -> Result<Experiment, CliError> {
    config.validate()?;
    let schedule = config.schedule()?;
    // Loaded data is shared by every seed; read it once.
    let loaded = match &config.dataset {
        Some(p) => Some(load_dataset(p)?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let runs: Vec<Result<SeedRun, CliError>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let (samples, truth) = match &loaded {
                    Some((s, t)) => (s.clone(), t.clone()),
                    None => samples_for(config, seed)?,
                };
                Ok(run_seed(config, &schedule, seed, &samples, truth))
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = Summary::from_records(config, runs.iter().map(|r| &r.record));
    Ok(Experiment { config: config.clone(), schedule, runs, summary })
}

/// Estimator settings for one seed of a run.
pub fn estimator_options(config: &RunConfig, seed: u64) -> EstimatorOptions {
    let tol = config.solver_tol.unwrap_or(config.eps / 30.0);
    EstimatorOptions {
        solver: Some(SolverConfig::new(tol).with_seed(seed).with_backend(config.backend)),
        seed,
        ..EstimatorOptions::default()
    }
}

/// Runs the robust estimator and both baselines on one sample set.
pub fn run_seed(
    config: &RunConfig,
    schedule: &ConstantSchedule,
    seed: u64,
    samples: &SampleSet,
    truth: Option<GroundTruth>,
) -> SeedRun {
    let opts = estimator_options(config, seed);
    let solver = opts.solver_config(config.eps);
    let err = |mu: &DVector<f64>| truth.as_ref().map(|t| t.error(mu));

    let t0 = Instant::now();
    let out = match config.mode {
        Regime::SubGaussian => estimate_subgaussian_using(samples, config.eps, schedule, &solver, &opts),
        Regime::BoundedCovariance => {
            estimate_bounded_cov_using(samples, config.eps, config.sigma, schedule, &solver, &opts)
        }
    };
    let wall = t0.elapsed().as_secs_f64() * 1e3;
    let mut results = vec![robust_result(ROBUST, out.as_ref(), wall, schedule, &err)];

    // Cross-check with the exact solver where the instance is small enough.
    let loop_n = match config.mode {
        Regime::SubGaussian => samples.n(),
        Regime::BoundedCovariance => samples.n() / 2,
    };
    if config.exact_oracle {
        if loop_n <= REFERENCE_MAX_N {
            let t0 = Instant::now();
            let exact = match config.mode {
                Regime::SubGaussian => estimate_subgaussian_using(samples, config.eps, schedule, &ReferenceSolver, &opts),
                Regime::BoundedCovariance => estimate_bounded_cov_using(
                    samples,
                    config.eps,
                    config.sigma,
                    schedule,
                    &ReferenceSolver,
                    &opts,
                ),
            };
            let wall = t0.elapsed().as_secs_f64() * 1e3;
            results.push(robust_result(ROBUST_EXACT, exact.as_ref(), wall, schedule, &err));
        } else {
            log::warn!("seed {seed}: {loop_n} samples exceed the exact solver limit of {REFERENCE_MAX_N}; skipping");
        }
    }

    for (name, f) in [(MEAN, empirical_mean as fn(&SampleSet) -> _), (MEDIAN, coordinatewise_median)] {
        let t0 = Instant::now();
        let mu = f(samples);
        let wall = t0.elapsed().as_secs_f64() * 1e3;
        results.push(baseline_result(name, mu, wall, &err));
    }

    let record = SeedRecord { seed, n: samples.n(), d: samples.dim(), results, constants: schedule.c };
    SeedRun { record, robust: out.ok(), truth }
}

fn robust_result(
    name: &str,
    out: Result<&EstimationReport, &robust_mean::Error>,
    wall_ms: f64,
    schedule: &ConstantSchedule,
    err: &dyn Fn(&DVector<f64>) -> Option<f64>,
) -> EstimatorResult {
    match out {
        Ok(r) => {
            let threshold = schedule.threshold_primal();
            let passed = match (r.terminal_case, r.verified_primal_objective) {
                (TerminalCase::PrimalAccepted, Some(v)) => v <= threshold,
                _ => false,
            };
            EstimatorResult {
                estimator: name.into(),
                error: err(&r.mu_hat),
                wall_ms,
                iterations: r.iterations,
                sdp_calls: r.sdp_calls,
                solver_iterations: r.solver_iterations,
                terminal_case: Some(r.terminal_case),
                branches: Some(branch_string(r)),
                verification: Some(Verification { primal_objective: r.verified_primal_objective, threshold, passed }),
                pruned_count: r.pruned_count,
                failure: None,
                mu_hat: r.mu_hat.iter().copied().collect(),
            }
        }
        Err(e) => failed(name, wall_ms, e.to_string()),
    }
}

fn baseline_result(
    name: &str,
    mu: robust_mean::Result<DVector<f64>>,
    wall_ms: f64,
    err: &dyn Fn(&DVector<f64>) -> Option<f64>,
) -> EstimatorResult {
    match mu {
        Ok(mu) => EstimatorResult {
            estimator: name.into(),
            error: err(&mu),
            wall_ms,
            iterations: 0,
            sdp_calls: 0,
            solver_iterations: 0,
            terminal_case: None,
            branches: None,
            verification: None,
            pruned_count: None,
            failure: None,
            mu_hat: mu.iter().copied().collect(),
        },
        Err(e) => failed(name, wall_ms, e.to_string()),
    }
}

fn failed(name: &str, wall_ms: f64, message: String) -> EstimatorResult {
    EstimatorResult {
        estimator: name.into(),
        error: None,
        wall_ms,
        iterations: 0,
        sdp_calls: 0,
        solver_iterations: 0,
        terminal_case: None,
        branches: None,
        verification: None,
        pruned_count: None,
        failure: Some(message),
        mu_hat: Vec::new(),
    }
}

fn branch_string(r: &EstimationReport) -> String {
    r.trace
        .iter()
        .map(|t| match t.branch {
            Branch::Primal => 'P',
            Branch::Dual => 'D',
        })
        .collect()
}
