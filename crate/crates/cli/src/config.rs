use std::path::{Path, PathBuf};

use robust_mean::contamination::{AdversaryKind, AdversarySpec};
use robust_mean::solver::Backend;
use robust_mean::{build_constants, ConstantOverrides, ConstantSchedule, Regime};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Regime,
    /// Sample count N. The bounded-covariance estimator draws 2N.
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "AdversarySpec::none")]
    pub adversary: AdversarySpec,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "is_empty")]
    pub constants: ConstantOverrides,
    pub output_path: PathBuf,
    /// Load samples from this file instead of generating them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub exact_oracle: bool,
}

fn one() -> f64 {
    1.0
}

fn default_backend() -> Backend {
    Backend::SmoothedCovering
}

fn is_empty(c: &ConstantOverrides) -> bool {
    c.0.is_empty()
}

impl RunConfig {
    pub fn new(mode: Regime, n: usize, d: usize, eps: f64, output_path: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            n,
            d,
            eps,
            sigma: 1.0,
            adversary: AdversarySpec::none(),
            seeds: vec![0],
            solver_tol: None,
            backend: Backend::SmoothedCovering,
            constants: ConstantOverrides::new(),
            output_path: output_path.into(),
            dataset: None,
            exact_oracle: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn schedule(&self) -> Result<ConstantSchedule, CliError> {
        build_constants(self.eps, self.mode, &self.constants).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Number of rows drawn per seed.
    pub fn draw_count(&self) -> usize {
        match self.mode {
            Regime::SubGaussian => self.n,
            Regime::BoundedCovariance => 2 * self.n,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.dataset.is_none() && (self.n < 2 || self.d == 0) {
            return bad(format!("need n ≥ 2 and d ≥ 1, got n = {}, d = {}", self.n, self.d));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.mode == Regime::SubGaussian && self.sigma != 1.0 {
            return bad("sigma applies to the bounded-covariance mode only".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate seeds".into());
        }
        if let Some(t) = self.solver_tol {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("solver tolerance must lie in (0, 1), got {t}"));
            }
        }
        if !(0.0..1.0 / 3.0).contains(&self.adversary.eps) {
            return bad(format!("adversary eps {} outside [0, 1/3)", self.adversary.eps));
        }
        if let AdversaryKind::ClusterShift { direction, .. } = &self.adversary.kind {
            if direction.len() != self.d {
                return bad(format!("shift direction has {} entries, expected {}", direction.len(), self.d));
            }
        }
        self.schedule()?;
        Ok(())
    }
}

/// Parses `"0,3,5..8"` into `[0, 3, 5, 6, 7]`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| s.parse::<u64>().map_err(|_| CliError::Config(format!("bad seed {s:?}")));
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            if b <= a {
                return Err(CliError::Config(format!("empty seed range {part:?}")));
            }
            out.extend(a..b);
        } else {
            out.push(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no seeds given".into()));
    }
    Ok(out)
}

/// Parses `c4=47.9` into an override.
pub fn parse_constant(text: &str) -> Result<(usize, f64), CliError> {
    let err = || CliError::Config(format!("expected cK=value with K in 1..=7, got {text:?}"));
    let (k, v) = text.split_once('=').ok_or_else(err)?;
    let idx = k.trim().strip_prefix('c').and_then(|s| s.parse::<usize>().ok()).filter(|i| (1..=7).contains(i));
    let val = v.trim().parse::<f64>().ok();
    match (idx, val) {
        (Some(i), Some(v)) => Ok((i, v)),
        _ => Err(err()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        let mut c = RunConfig::new(Regime::BoundedCovariance, 200, 10, 0.1, "out/run.jsonl");
        c.sigma = 3.0;
        c.seeds = vec![1, 2, 40];
        c.solver_tol = Some(0.003);
        c.constants = ConstantOverrides::new().with(4, 33.5);
        let mut direction = vec![0.0; 10];
        direction[0] = 1.0;
        c.adversary = AdversarySpec::new(AdversaryKind::ClusterShift { direction, magnitude: 12.5 }, 0.1);
        c
    }

    #[test]
    fn toml_round_trip() {
        let c = sample();
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        let mut plain = RunConfig::new(Regime::SubGaussian, 50, 3, 0.2, "x.jsonl");
        plain.adversary = AdversarySpec::new(AdversaryKind::FarPoints { radius: 1e3 }, 0.2);
        assert_eq!(RunConfig::from_toml(&plain.to_toml()).unwrap(), plain);
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let c = RunConfig::from_toml("mode = \"sub_gaussian\"\nn = 100\nd = 5\neps = 0.1\nseeds = [7]\noutput_path = \"a.jsonl\"\n").unwrap();
        assert_eq!(c.sigma, 1.0);
        assert_eq!(c.adversary, AdversarySpec::none());
        assert!(!c.exact_oracle);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("mode = \"sub_gaussian\"\nbogus = 1").is_err());
        let mut c = sample();
        c.eps = 0.4;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = sample();
        c.seeds = vec![3, 3];
        assert!(c.validate().is_err());
        let mut c = sample();
        c.constants = ConstantOverrides::new().with(4, 1e-9);
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0,3,5..8").unwrap(), vec![0, 3, 5, 6, 7]);
        assert!(parse_seeds("4..4").is_err());
        assert!(parse_seeds("x").is_err());
        assert_eq!(parse_constant("c4=2.5").unwrap(), (4, 2.5));
        assert!(parse_constant("c9=1").is_err());
    }
}
