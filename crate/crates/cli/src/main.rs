use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmes_cli::config::{parse_constant, parse_seeds};
use rmes_cli::experiment::ROBUST;
use rmes_cli::report::{log_log_slope, render, write_report};
use rmes_cli::{check_seed_conditions, generate_datasets, run_experiment, CliError, RunConfig};
use robust_mean::contamination::{AdversaryKind, AdversarySpec};
use robust_mean::solver::Backend;
use robust_mean::Regime;

#[derive(Parser)]
#[command(name = "rmes", version, about = "Robust mean estimation experiments")]
struct Cli {
    /// Seeds run concurrently (default: all cores; `bench` defaults to 1).
    #[arg(long, env = "RMES_JOBS", global = true)]
    jobs: Option<usize>,
    /// Log more (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic datasets with ground-truth sidecars.
    Generate(RunArgs),
    /// Run the robust estimator and baselines, writing a JSONL report.
    Estimate(RunArgs),
    /// Time the robust estimator over a sweep of dimensions with N ∝ d.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Dimensions to sweep.
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
        dims: Vec<usize>,
        /// Samples per dimension.
        #[arg(long, default_value_t = 10)]
        n_per_d: usize,
    },
    /// Check the deterministic sample conditions on each seed's good draws.
    CheckConditions {
        #[command(flatten)]
        run: RunArgs,
        /// Random restarts of the alternating maximization.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SubGaussian,
    BoundedCovariance,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryArg {
    None,
    ClusterShift,
    FarPoints,
    SubspaceNoise,
    MeanMimic,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Smoothed,
    Mmw,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Sample count N (the bounded-covariance mode draws 2N).
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(short, long)]
    d: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    adversary: Option<AdversaryArg>,
    /// Corrupted fraction; defaults to --eps.
    #[arg(long)]
    adversary_eps: Option<f64>,
    /// Cluster-shift distance (default σδ/ε).
    #[arg(long)]
    magnitude: Option<f64>,
    /// Far-point distance (default 10σ√d).
    #[arg(long)]
    radius: Option<f64>,
    /// Subspace-noise rank (default 1).
    #[arg(long)]
    rank: Option<usize>,
    /// Subspace-noise scale (default 10σ).
    #[arg(long)]
    scale: Option<f64>,
    /// Mean-mimic offset (default σδ/ε).
    #[arg(long)]
    offset: Option<f64>,
    /// Seeds as a list with ranges, e.g. `0,4,10..20`.
    #[arg(long = "seed")]
    seeds: Option<String>,
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Constant override `cK=value`; repeatable.
    #[arg(long = "constant")]
    constants: Vec<String>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Estimate on this dataset file instead of generating samples.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Re-run small instances with the exact SDP solver for comparison.
    #[arg(long)]
    exact_oracle: bool,
}

impl RunArgs {
    fn into_config(self, default_out: &str) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let need = |what: &str| CliError::Config(format!("--{what} is required without --config"));
                let mode = self.mode.ok_or_else(|| need("mode"))?;
                let eps = self.eps.ok_or_else(|| need("eps"))?;
                let (n, d) = if self.dataset.is_some() {
                    (self.n.unwrap_or(0), self.d.unwrap_or(0))
                } else {
                    (self.n.ok_or_else(|| need("n"))?, self.d.ok_or_else(|| need("d"))?)
                };
                RunConfig::new(regime(mode), n, d, eps, default_out)
            }
        };
        if let Some(m) = self.mode {
            cfg.mode = regime(m);
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(e) = self.eps {
            cfg.eps = e;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(t) = self.solver_tol {
            cfg.solver_tol = Some(t);
        }
        if let Some(b) = self.backend {
            cfg.backend = match b {
                BackendArg::Smoothed => Backend::SmoothedCovering,
                BackendArg::Mmw => Backend::Mmw,
            };
        }
        for c in &self.constants {
            let (i, v) = parse_constant(c)?;
            cfg.constants = std::mem::take(&mut cfg.constants).with(i, v);
        }
        if let Some(o) = self.out {
            cfg.output_path = o;
        }
        if let Some(p) = self.dataset {
            cfg.dataset = Some(p);
        }
        cfg.exact_oracle |= self.exact_oracle;
        if let Some(a) = self.adversary {
            let schedule = cfg.schedule()?;
            let shift = cfg.sigma * schedule.delta() / cfg.eps;
            let d = cfg.d;
            let kind = match a {
                AdversaryArg::None => AdversaryKind::NoCorruption,
                AdversaryArg::ClusterShift => {
                    let mut direction = vec![0.0; d];
                    if let Some(x) = direction.first_mut() {
                        *x = 1.0;
                    }
                    AdversaryKind::ClusterShift { direction, magnitude: self.magnitude.unwrap_or(shift) }
                }
                AdversaryArg::FarPoints => {
                    AdversaryKind::FarPoints { radius: self.radius.unwrap_or(10.0 * cfg.sigma * (d as f64).sqrt()) }
                }
                AdversaryArg::SubspaceNoise => AdversaryKind::SubspaceNoise {
                    rank: self.rank.unwrap_or(1),
                    scale: self.scale.unwrap_or(10.0 * cfg.sigma),
                },
                AdversaryArg::MeanMimic => AdversaryKind::MeanMimic { offset: self.offset.unwrap_or(shift) },
            };
            let eps = if matches!(kind, AdversaryKind::NoCorruption) { 0.0 } else { cfg.eps };
            cfg.adversary = AdversarySpec::new(kind, eps);
        }
        if let Some(e) = self.adversary_eps {
            cfg.adversary.eps = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn regime(m: ModeArg) -> Regime {
    match m {
        ModeArg::SubGaussian => Regime::SubGaussian,
        ModeArg::BoundedCovariance => Regime::BoundedCovariance,
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.into_config("data.bin")?;
            for p in generate_datasets(&cfg)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate(args) => {
            let cfg = args.into_config("report.jsonl")?;
            let exp = run_experiment(&cfg, cli.jobs.unwrap_or_else(default_jobs))?;
            write_report(&exp, &cfg.output_path)?;
            print!("{}", exp.summary.table());
            let failed = exp.failures();
            if failed > 0 {
                eprintln!("{failed} estimator runs failed; see {}", cfg.output_path.display());
                return Ok(ExitCode::from(rmes_cli::EXIT_RUNTIME as u8));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { run, dims, n_per_d } => {
            let base = run.into_config("bench.jsonl")?;
            if dims.len() < 2 || n_per_d == 0 {
                return Err(CliError::Config("bench needs at least two dimensions and --n-per-d ≥ 1".into()));
            }
            let jobs = cli.jobs.unwrap_or(1);
            let mut body = String::new();
            let mut points = Vec::new();
            for &d in &dims {
                let mut cfg = base.clone();
                cfg.d = d;
                cfg.n = n_per_d * d;
                if let AdversaryKind::ClusterShift { direction, .. } = &mut cfg.adversary.kind {
                    *direction = vec![0.0; d];
                    direction[0] = 1.0;
                }
                let exp = run_experiment(&cfg, jobs)?;
                print!("{}", exp.summary.table());
                let ms = exp.summary.estimator(ROBUST).map(|e| e.median_wall_ms).unwrap_or(f64::NAN);
                points.push(((d * cfg.draw_count()) as f64, ms));
                body.push_str(&render(&exp));
            }
            let slope = log_log_slope(&points);
            body.push_str(&serde_json::json!({"type": "scaling", "points": points, "exponent_vs_dn": slope}).to_string());
            body.push('\n');
            if let Some(dir) = base.output_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            std::fs::write(&base.output_path, body).map_err(|e| CliError::io(&base.output_path, e))?;
            println!("fitted exponent of wall time vs d·N: {slope:.3}");
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckConditions { run, trials } => {
            let out = run.out.clone();
            let cfg = run.into_config("conditions.jsonl")?;
            let lines = check_seed_conditions(&cfg, trials, cli.jobs.unwrap_or_else(default_jobs))?;
            let mut body = String::new();
            for l in &lines {
                body.push_str(&serde_json::to_string(l).expect("condition line serializes"));
                body.push('\n');
            }
            match out {
                Some(p) => std::fs::write(&p, body).map_err(|e| CliError::io(&p, e))?,
                None => print!("{body}"),
            }
            let failing = lines.iter().filter(|l| !l.all_ok).count();
            eprintln!("{} of {} seeds pass all conditions", lines.len() - failing, lines.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rmes: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
