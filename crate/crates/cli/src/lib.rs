//! Experiment runner for the robust mean estimators: data generation and
//! loading, estimator and baseline runs, and line-delimited JSON reports.

pub mod config;
pub mod experiment;
pub mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use robust_mean::contamination::{check_conditions_seeded, generate, write_dataset, write_sidecar, ConditionReport};
use serde::Serialize;

pub use config::RunConfig;
pub use experiment::{load_dataset, run_experiment, Experiment, SeedRecord};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Core(#[from] robust_mean::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, err: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Where `generate` writes a seed's dataset: `path` itself for a single seed,
/// otherwise `stem.s<seed>.ext` next to it.
pub fn dataset_path(path: &Path, seed: u64, single: bool) -> PathBuf {
    if single {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.s{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.s{seed}"),
    };
    path.with_file_name(name)
}

/// Draws each seed's samples and writes them with their ground-truth sidecars.
pub fn generate_datasets(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let single = config.seeds.len() == 1;
    if let Some(dir) = config.output_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    config
        .seeds
        .iter()
        .map(|&seed| {
            let (samples, truth) = generate(&experiment::generator_for(config, seed), &config.adversary)?;
            let path = dataset_path(&config.output_path, seed, single);
            write_dataset(&path, &samples)?;
            write_sidecar(&path, &truth, Some(seed))?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionLine {
    pub seed: u64,
    pub all_ok: bool,
    #[serde(flatten)]
    pub report: ConditionReport,
}

/// Checks the deterministic conditions on each seed's clean draws.
pub fn check_seed_conditions(config: &RunConfig, trials: usize, jobs: usize) -> Result<Vec<ConditionLine>, CliError> {
    config.validate()?;
    let schedule = config.schedule()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let (samples, truth) = experiment::samples_for(config, seed)?;
                let truth = truth.ok_or_else(|| CliError::Config("conditions need a ground-truth sidecar".into()))?;
                let report = check_conditions_seeded(&samples, &truth, &schedule, trials, seed);
                Ok(ConditionLine { seed, all_ok: report.all_ok(), report })
            })
            .collect()
    })
}
