use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use robust_mean::contamination::AdversaryKind;
use robust_mean::Regime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::experiment::{Experiment, SeedRecord};
use crate::CliError;

/// Keys that hold wall-clock measurements. Everything else in a report is a
/// deterministic function of the config.
pub const TIMING_KEYS: [&str; 2] = ["wall_ms", "median_wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub runs: usize,
    pub failures: usize,
    pub median_error: Option<f64>,
    pub p90_error: Option<f64>,
    pub median_wall_ms: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Regime,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub sigma: f64,
    pub adversary: String,
    pub seeds: usize,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Line {
    Seed(SeedRecord),
    Summary(Summary),
}

/// Linear-interpolation percentile of `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn adversary_name(kind: &AdversaryKind) -> &'static str {
    match kind {
        AdversaryKind::NoCorruption => "none",
        AdversaryKind::ClusterShift { .. } => "cluster_shift",
        AdversaryKind::FarPoints { .. } => "far_points",
        AdversaryKind::SubspaceNoise { .. } => "subspace_noise",
        AdversaryKind::MeanMimic { .. } => "mean_mimic",
    }
}

impl Summary {
    pub fn from_records<'a>(config: &RunConfig, records: impl Iterator<Item = &'a SeedRecord>) -> Self {
        let records: Vec<&SeedRecord> = records.collect();
        let mut names: Vec<&str> = Vec::new();
        for r in &records {
            for e in &r.results {
                if !names.contains(&e.estimator.as_str()) {
                    names.push(&e.estimator);
                }
            }
        }
        let estimators = names
            .iter()
            .map(|&name| {
                let rs: Vec<_> = records.iter().filter_map(|r| r.result(name)).collect();
                let errors: Vec<f64> = rs.iter().filter_map(|r| r.error).collect();
                let walls: Vec<f64> = rs.iter().map(|r| r.wall_ms).collect();
                EstimatorSummary {
                    estimator: name.to_string(),
                    runs: rs.len(),
                    failures: rs.iter().filter(|r| r.failure.is_some()).count(),
                    median_error: percentile(&errors, 0.5),
                    p90_error: percentile(&errors, 0.9),
                    median_wall_ms: percentile(&walls, 0.5).unwrap_or(0.0),
                    max_iterations: rs.iter().map(|r| r.iterations).max().unwrap_or(0),
                }
            })
            .collect();
        Summary {
            mode: config.mode,
            n: records.first().map(|r| r.n).unwrap_or(config.draw_count()),
            d: records.first().map(|r| r.d).unwrap_or(config.d),
            eps: config.eps,
            sigma: config.sigma,
            adversary: match config.dataset {
                Some(_) => "dataset".into(),
                None => adversary_name(&config.adversary.kind).into(),
            },
            seeds: records.len(),
            estimators,
        }
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == name)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} n={} d={} eps={} sigma={} adversary={} seeds={}",
            self.mode, self.n, self.d, self.eps, self.sigma, self.adversary, self.seeds
        );
        let _ = writeln!(
            s,
            "{:<24} {:>12} {:>12} {:>12} {:>8} {:>8}",
            "estimator", "median_err", "p90_err", "median_ms", "max_it", "failed"
        );
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into());
        for e in &self.estimators {
            let _ = writeln!(
                s,
                "{:<24} {:>12} {:>12} {:>12.1} {:>8} {:>8}",
                e.estimator,
                fmt(e.median_error),
                fmt(e.p90_error),
                e.median_wall_ms,
                e.max_iterations,
                e.failures
            );
        }
        s
    }
}

/// One JSON object per line: a record per seed, then the summary.
pub fn render(exp: &Experiment) -> String {
    let mut out = String::new();
    for r in exp.records() {
        out.push_str(&serde_json::to_string(&Line::Seed(r.clone())).expect("record serializes"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&Line::Summary(exp.summary.clone())).expect("summary serializes"));
    out.push('\n');
    out
}

pub fn write_report(exp: &Experiment, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(render(exp).as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn parse_report(text: &str) -> Result<Vec<Line>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("bad report line: {e}"))))
        .collect()
}

fn strip(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for k in TIMING_KEYS {
                m.remove(k);
            }
            m.values_mut().for_each(strip);
        }
        Value::Array(a) => a.iter_mut().for_each(strip),
        _ => {}
    }
}

/// The report with every timing field removed, for comparing runs.
pub fn normalized_body(text: &str) -> Result<String, CliError> {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: Value = serde_json::from_str(line).map_err(|e| CliError::Runtime(format!("bad report line: {e}")))?;
        strip(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Least-squares slope of log(y) against log(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        assert_eq!(percentile(&[], 0.5), None);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
        assert!((percentile(&(1..=11).map(f64::from).collect::<Vec<_>>(), 0.9).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(1.3))).collect();
        assert!((log_log_slope(&pts) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn strip_removes_nested_timing() {
        let a = "{\"seed\":1,\"results\":[{\"wall_ms\":3.5,\"error\":0.1}]}\n";
        let b = "{\"seed\":1,\"results\":[{\"wall_ms\":9.0,\"error\":0.1}]}\n";
        assert_eq!(normalized_body(a).unwrap(), normalized_body(b).unwrap());
        assert!(!normalized_body(a).unwrap().contains("wall_ms"));
    }
}
