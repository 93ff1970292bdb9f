//! Synthetic ε-corrupted data: clean draws, adversaries, and condition checks.

mod conditions;
mod dataset;

pub use conditions::{check_conditions, check_conditions_seeded, ConditionReport};
pub use dataset::{
    decode_dataset, decode_sidecar, encode_dataset, encode_sidecar, read_dataset, read_sidecar,
    sidecar_path, write_dataset, write_sidecar, Sidecar, DATASET_MAGIC, DATASET_VERSION,
    HEADER_LEN,
};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::stage_rng;
use crate::model::{GroundTruth, SampleSet};

// Stream ids; each stage of generation draws from its own stream.
const STREAM_CLEAN: u64 = 1;
const STREAM_ROTATION: u64 = 2;
const STREAM_INDICES: u64 = 3;
const STREAM_ADVERSARY: u64 = 4;

/// Degrees of freedom of the heavy-tailed bounded-covariance draws.
pub const STUDENT_DOF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpectrum {
    /// Every eigenvalue equals `value`.
    Isotropic { value: f64 },
    /// Eigenvalues top·ratio^k for k = 0..d.
    Decaying { top: f64, ratio: f64 },
    Explicit { values: Vec<f64> },
}

impl CovarianceSpectrum {
    pub fn eigenvalues(&self, d: usize) -> Result<Vec<f64>> {
        let vals = match self {
            CovarianceSpectrum::Isotropic { value } => vec![*value; d],
            CovarianceSpectrum::Decaying { top, ratio } => {
                (0..d).map(|k| top * ratio.powi(k as i32)).collect()
            }
            CovarianceSpectrum::Explicit { values } => {
                if values.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: values.len() });
                }
                values.clone()
            }
        };
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSpec("spectrum entries must be finite and nonnegative".into()));
        }
        Ok(vals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SampleDistribution {
    GaussianIdentity { mu: Vec<f64> },
    /// Multivariate Student-t scale mixture normalized to the given covariance
    /// spectrum under a random rotation. Every eigenvalue must be ≤ σ².
    BoundedCovariance { mu: Vec<f64>, spectrum: CovarianceSpectrum, sigma: f64 },
}

impl SampleDistribution {
    pub fn mu(&self) -> &[f64] {
        match self {
            SampleDistribution::GaussianIdentity { mu } => mu,
            SampleDistribution::BoundedCovariance { mu, .. } => mu,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            SampleDistribution::GaussianIdentity { .. } => 1.0,
            SampleDistribution::BoundedCovariance { sigma, .. } => *sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub distribution: SampleDistribution,
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn gaussian(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            distribution: SampleDistribution::GaussianIdentity { mu: vec![0.0; dim] },
            n,
            dim,
            seed,
        }
    }

    pub fn bounded(n: usize, dim: usize, sigma: f64, seed: u64) -> Self {
        Self {
            distribution: SampleDistribution::BoundedCovariance {
                mu: vec![0.0; dim],
                spectrum: CovarianceSpectrum::Isotropic { value: sigma * sigma },
                sigma,
            },
            n,
            dim,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryKind {
    NoCorruption,
    /// Outliers at μ* + magnitude·direction/‖direction‖.
    ClusterShift { direction: Vec<f64>, magnitude: f64 },
    /// Outliers at μ̃ + radius·u with u a fresh random unit vector each, where μ̃
    /// is the mean of the clean draws.
    FarPoints { radius: f64 },
    /// Outliers at μ̃ + scale·U z, U a random d×rank orthonormal frame, z ~ N(0, I).
    SubspaceNoise { rank: usize, scale: f64 },
    /// Copies of random clean draws shifted by `offset` along one random direction.
    MeanMimic { offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    #[serde(flatten)]
    pub kind: AdversaryKind,
    pub eps: f64,
}

impl AdversarySpec {
    pub fn none() -> Self {
        Self { kind: AdversaryKind::NoCorruption, eps: 0.0 }
    }

    pub fn new(kind: AdversaryKind, eps: f64) -> Self {
        Self { kind, eps }
    }

    /// floor(ε·N), the number of replaced samples.
    pub fn corrupted_count(&self, n: usize) -> usize {
        if matches!(self.kind, AdversaryKind::NoCorruption) {
            return 0;
        }
        // The nudge absorbs products like 0.1·30 landing a hair below an integer.
        ((self.eps * n as f64) + 1e-9).floor() as usize
    }
}

fn validate(spec: &GeneratorSpec, adv: &AdversarySpec) -> Result<()> {
    if spec.n == 0 || spec.dim == 0 {
        return Err(Error::InvalidSpec("n and dim must be positive".into()));
    }
    let mu = spec.distribution.mu();
    if mu.len() != spec.dim {
        return Err(Error::InvalidSpec(format!("mu has length {}, dim is {}", mu.len(), spec.dim)));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("mu must be finite".into()));
    }
    if let SampleDistribution::BoundedCovariance { spectrum, sigma, .. } = &spec.distribution {
        if !(sigma.is_finite() && *sigma > 0.0) {
            return Err(Error::InvalidSpec(format!("sigma = {sigma}")));
        }
        let vals = spectrum.eigenvalues(spec.dim)?;
        let bound = sigma * sigma * (1.0 + 1e-12);
        if let Some(v) = vals.iter().find(|v| **v > bound) {
            return Err(Error::InvalidSpec(format!("spectrum entry {v} exceeds sigma² = {}", sigma * sigma)));
        }
    }
    if !(adv.eps >= 0.0 && adv.eps < 1.0 / 3.0) {
        return Err(Error::InvalidSpec(format!("adversary eps {} outside [0, 1/3)", adv.eps)));
    }
    match &adv.kind {
        AdversaryKind::ClusterShift { direction, magnitude } => {
            if direction.len() != spec.dim {
                return Err(Error::InvalidSpec(format!(
                    "direction has length {}, dim is {}",
                    direction.len(),
                    spec.dim
                )));
            }
            let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) || !magnitude.is_finite() {
                return Err(Error::InvalidSpec("cluster direction must be nonzero and finite".into()));
            }
        }
        AdversaryKind::FarPoints { radius } if !(radius.is_finite() && *radius >= 0.0) => {
            return Err(Error::InvalidSpec(format!("radius = {radius}")));
        }
        AdversaryKind::SubspaceNoise { rank, scale } => {
            if *rank == 0 || *rank > spec.dim || !scale.is_finite() {
                return Err(Error::InvalidSpec(format!("subspace rank {rank} in dim {}", spec.dim)));
            }
        }
        AdversaryKind::MeanMimic { offset } if !offset.is_finite() => {
            return Err(Error::InvalidSpec(format!("offset = {offset}")));
        }
        _ => {}
    }
    Ok(())
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Fill row-major so the draw order does not depend on the storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn random_orthonormal(rng: &mut ChaCha20Rng, d: usize, k: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, k);
    let qr = g.qr();
    let q = qr.q();
    // Fix the sign ambiguity of QR so the frame is a deterministic function of g.
    let r = qr.r();
    let mut out = q.columns(0, k).into_owned();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}

fn random_unit(rng: &mut ChaCha20Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| { let z: f64 = StandardNormal.sample(rng); z });
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn clean_draws(spec: &GeneratorSpec) -> Result<DMatrix<f64>> {
    let (n, d) = (spec.n, spec.dim);
    let mut rng = stage_rng(spec.seed, STREAM_CLEAN);
    let mu = DVector::from_column_slice(spec.distribution.mu());
    let mut x = match &spec.distribution {
        SampleDistribution::GaussianIdentity { .. } => gaussian_matrix(&mut rng, n, d),
        SampleDistribution::BoundedCovariance { spectrum, .. } => {
            let vals = spectrum.eigenvalues(d)?;
            let mut rot_rng = stage_rng(spec.seed, STREAM_ROTATION);
            let q = random_orthonormal(&mut rot_rng, d, d);
            let chi = ChiSquared::new(STUDENT_DOF).expect("positive dof");
            let mut g = gaussian_matrix(&mut rng, n, d);
            for i in 0..n {
                // E[(dof-2)/W] = 1 for W ~ χ²(dof), so each row has covariance diag(vals).
                let w: f64 = chi.sample(&mut rng);
                let s = ((STUDENT_DOF - 2.0) / w).sqrt();
                for j in 0..d {
                    g[(i, j)] *= s * vals[j].sqrt();
                }
            }
            g * q.transpose()
        }
    };
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] += mu[j];
        }
    }
    Ok(x)
}

/// Draws N clean samples, then replaces floor(ε·N) of them, chosen uniformly
/// at random, according to the adversary.
pub fn generate(spec: &GeneratorSpec, adversary: &AdversarySpec) -> Result<(SampleSet, GroundTruth)> {
    validate(spec, adversary)?;
    let (n, d) = (spec.n, spec.dim);
    let mut x = clean_draws(spec)?;
    let mu = DVector::from_column_slice(spec.distribution.mu());
    let m = adversary.corrupted_count(n);
    let mut good_mask = vec![true; n];

    if m > 0 {
        let mut idx_rng = stage_rng(spec.seed, STREAM_INDICES);
        let mut bad: Vec<usize> = index::sample(&mut idx_rng, n, m).into_vec();
        bad.sort_unstable();
        for &i in &bad {
            good_mask[i] = false;
        }
        let good_idx: Vec<usize> = (0..n).filter(|&i| good_mask[i]).collect();
        let clean_mean = if good_idx.is_empty() {
            mu.clone()
        } else {
            let mut s = DVector::zeros(d);
            for &i in &good_idx {
                s += x.row(i).transpose();
            }
            s / good_idx.len() as f64
        };
        let mut rng = stage_rng(spec.seed, STREAM_ADVERSARY);
        place_outliers(&mut x, &bad, &good_idx, &mu, &clean_mean, &adversary.kind, &mut rng);
    }

    let samples = SampleSet::new(x)?;
    let truth = GroundTruth::new(mu, good_mask, spec.distribution.sigma(), adversary.eps)?;
    Ok((samples, truth))
}

fn place_outliers(
    x: &mut DMatrix<f64>,
    bad: &[usize],
    good_idx: &[usize],
    mu: &DVector<f64>,
    clean_mean: &DVector<f64>,
    kind: &AdversaryKind,
    rng: &mut ChaCha20Rng,
) {
    let d = x.ncols();
    match kind {
        AdversaryKind::NoCorruption => {}
        AdversaryKind::ClusterShift { direction, magnitude } => {
            let u = DVector::from_column_slice(direction);
            let p = mu + u.normalize() * *magnitude;
            for &i in bad {
                x.set_row(i, &p.transpose());
            }
        }
        AdversaryKind::FarPoints { radius } => {
            for &i in bad {
                let p = clean_mean + random_unit(rng, d) * *radius;
                x.set_row(i, &p.transpose());
            }
        }
        AdversaryKind::SubspaceNoise { rank, scale } => {
            let u = random_orthonormal(rng, d, *rank);
            for &i in bad {
                let z = DVector::from_fn(*rank, |_, _| StandardNormal.sample(rng));
                let p = clean_mean + &u * z * *scale;
                x.set_row(i, &p.transpose());
            }
        }
        AdversaryKind::MeanMimic { offset } => {
            let u = random_unit(rng, d);
            for &i in bad {
                let src = if good_idx.is_empty() { i } else { good_idx[rng.random_range(0..good_idx.len())] };
                let p = x.row(src).transpose() + &u * *offset;
                x.set_row(i, &p.transpose());
            }
        }
    }
}
