#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use robust_mean::sdp::SdpContext;
use robust_mean::{SampleSet, WeightVector};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(r: &mut ChaCha20Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal) * scale)
}

pub fn random_ctx(seed: u64, n: usize, d: usize, eps: f64) -> SdpContext {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, d, 1.0);
    let nu = DVector::from_fn(d, |_, _| r.random::<f64>() * 2.0 - 1.0);
    SdpContext::new(Arc::new(SampleSet::new(x).unwrap()), nu, eps).unwrap()
}

/// Water-fill onto the capped simplex: Σ min(t·rawᵢ, cap) = 1.
pub fn strict_weights(raw: &[f64], eps: f64) -> WeightVector {
    let n = raw.len();
    let cap = 1.0 / ((1.0 - eps) * n as f64);
    let raw: Vec<f64> = raw.iter().map(|x| x.abs() + 1e-3).collect();
    let fill = |t: f64| raw.iter().map(|&x| (t * x).min(cap)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while fill(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w: Vec<f64> = raw.iter().map(|&x| (hi * x).min(cap)).collect();
    let s: f64 = w.iter().sum();
    WeightVector::strict(DVector::from_vec(w.iter().map(|x| x / s).collect()), eps).unwrap()
}

pub fn random_weights(r: &mut ChaCha20Rng, n: usize, eps: f64) -> WeightVector {
    let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    strict_weights(&raw, eps)
}

/// Random trace-one PSD matrix of random rank.
pub fn random_trace_one(r: &mut ChaCha20Rng, d: usize) -> DMatrix<f64> {
    let k = r.random_range(1..=d);
    let g = gaussian_matrix(r, d, k, 1.0);
    let m = &g * g.transpose();
    &m / m.trace()
}
