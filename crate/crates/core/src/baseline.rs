//! Reference estimators and the pruning step used before the bounded-covariance loop.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::SampleSet;

/// Radius multiplier K in K·sqrt(d/ε)·σ̂.
pub const PRUNE_RADIUS_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub pruned: SampleSet,
    pub replaced_count: usize,
    pub center: DVector<f64>,
    pub radius: f64,
}

pub fn empirical_mean(samples: &SampleSet) -> Result<DVector<f64>> {
    let n = samples.n();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(samples.data().row_mean().transpose())
}

/// Per-coordinate median; the lower median when n is even.
pub fn coordinatewise_median(samples: &SampleSet) -> Result<DVector<f64>> {
    let n = samples.n();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let k = (n - 1) / 2;
    let mut buf = vec![0.0; n];
    let out = samples
        .data()
        .column_iter()
        .map(|col| {
            buf.copy_from_slice(col.as_slice());
            *buf.select_nth_unstable_by(k, |a, b| a.total_cmp(b)).1
        })
        .collect::<Vec<_>>();
    Ok(DVector::from_vec(out))
}

pub fn prune_radius(d: usize, eps: f64, sigma: f64) -> f64 {
    PRUNE_RADIUS_FACTOR * (d as f64 / eps).sqrt() * sigma
}

/// Centers on the median of `split_a` and replaces rows of `split_b` farther
/// than the radius by that center.
pub fn prune(split_a: &SampleSet, split_b: &SampleSet, eps: f64) -> Result<PruneResult> {
    prune_scaled(split_a, split_b, eps, 1.0)
}

pub fn prune_scaled(
    split_a: &SampleSet,
    split_b: &SampleSet,
    eps: f64,
    sigma: f64,
) -> Result<PruneResult> {
    if split_a.dim() != split_b.dim() {
        return Err(Error::DimensionMismatch { expected: split_a.dim(), found: split_b.dim() });
    }
    if !(eps > 0.0) {
        return Err(Error::EpsOutOfRange(eps));
    }
    let center = coordinatewise_median(split_a)?;
    let radius = prune_radius(split_a.dim(), eps, sigma);
    prune_with(split_b, &center, radius)
}

/// Replaces every row outside the closed ball B(center, radius) by center.
pub fn prune_with(samples: &SampleSet, center: &DVector<f64>, radius: f64) -> Result<PruneResult> {
    samples.check_dim(center.len())?;
    let mut data = samples.data().clone();
    let mut replaced = 0;
    for i in 0..data.nrows() {
        let dist = (data.row(i).transpose() - center).norm();
        if dist > radius {
            data.set_row(i, &center.transpose());
            replaced += 1;
        }
    }
    Ok(PruneResult {
        pruned: SampleSet::new(data)?,
        replaced_count: replaced,
        center: center.clone(),
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> SampleSet {
        SampleSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(empirical_mean(&set(&[&[1.0, 1.0], &[3.0, 3.0]])).unwrap().as_slice(), &[2.0, 2.0]);
        assert_eq!(empirical_mean(&set(&[&[5.0, -1.0]])).unwrap().as_slice(), &[5.0, -1.0]);
    }

    #[test]
    fn median_examples() {
        let m = coordinatewise_median(&set(&[&[0.0, 0.0], &[1.0, 10.0], &[2.0, 2.0]])).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0]);
        assert_eq!(coordinatewise_median(&set(&[&[0.0], &[1.0]])).unwrap()[0], 0.0);
    }

    #[test]
    fn prune_all_inside() {
        let a = set(&[&[0.0, 0.0], &[0.1, 0.0], &[0.0, 0.1]]);
        let b = set(&[&[1.0, 1.0], &[-1.0, 0.5]]);
        let r = prune(&a, &b, 0.1).unwrap();
        assert_eq!(r.replaced_count, 0);
        assert_eq!(r.pruned, b);
    }

    #[test]
    fn prune_one_far_row() {
        let a = set(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let radius = prune_radius(2, 0.1, 1.0);
        let b = set(&[&[1.0, 1.0], &[2.0 * radius, 0.0]]);
        let r = prune(&a, &b, 0.1).unwrap();
        assert_eq!(r.replaced_count, 1);
        assert_eq!(r.pruned.row(1).as_slice(), &[0.0, 0.0]);
        assert_eq!(r.pruned.row(0).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn prune_dim_mismatch() {
        let a = set(&[&[0.0, 0.0]]);
        let b = set(&[&[0.0]]);
        assert!(matches!(prune(&a, &b, 0.1), Err(Error::DimensionMismatch { .. })));
    }
}
