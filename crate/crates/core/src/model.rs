//! Core domain types and the constants schedule.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Per-stage failure budget. Solver retry counts are derived from it.
pub const TAU: f64 = 1.0 / 30.0;

/// An N×d sample matrix; row i is the sample Xᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: DMatrix<f64>,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        // nalgebra is column-major, so scan column by column.
        for (col, column) in data.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = rows[0].len();
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    /// Builds from row-major data of shape n×d.
    pub fn from_row_major(n: usize, d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: values.len() });
        }
        Self::new(DMatrix::from_row_slice(n, d, values))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n() * self.dim());
        for i in 0..self.n() {
            out.extend(self.data.row(i).iter());
        }
        out
    }

    /// Rows minus `nu`, as an N×d matrix.
    pub fn centered(&self, nu: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(nu.len())?;
        let mut v = self.data.clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.add_scalar_mut(-nu[j]);
        }
        Ok(v)
    }

    /// Returns σ·X + shift, applied row-wise.
    pub fn affine(&self, scale: f64, shift: &DVector<f64>) -> Result<SampleSet> {
        self.check_dim(shift.len())?;
        let mut v = &self.data * scale;
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.add_scalar_mut(shift[j]);
        }
        SampleSet::new(v)
    }

    /// Splits into the first ceil(n/2) rows and the rest.
    pub fn split_halves(&self) -> Result<(SampleSet, SampleSet)> {
        let n = self.n();
        if n < 2 {
            return Err(Error::EmptyInput);
        }
        let first = n.div_ceil(2);
        let a = self.data.rows(0, first).into_owned();
        let b = self.data.rows(first, n - first).into_owned();
        Ok((SampleSet::new(a)?, SampleSet::new(b)?))
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: d });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mu_star: DVector<f64>,
    pub good_mask: Vec<bool>,
    /// Upper bound on the covariance spectral norm (1 for identity covariance).
    pub sigma: f64,
}

impl GroundTruth {
    pub fn new(mu_star: DVector<f64>, good_mask: Vec<bool>, sigma: f64, eps: f64) -> Result<Self> {
        let n = good_mask.len();
        let good = good_mask.iter().filter(|g| **g).count();
        if (good as f64) < (1.0 - eps) * n as f64 - 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "only {good} of {n} samples are good at eps = {eps}"
            )));
        }
        Ok(Self { mu_star, good_mask, sigma })
    }

    pub fn good_count(&self) -> usize {
        self.good_mask.iter().filter(|g| **g).count()
    }

    pub fn error(&self, mu_hat: &DVector<f64>) -> f64 {
        (mu_hat - &self.mu_star).norm()
    }
}

/// Cap on each coordinate of an element of Δ_{N,ε}.
pub fn box_cap(n: usize, eps: f64) -> f64 {
    1.0 / ((1.0 - eps) * n as f64)
}

/// A weight vector in Δ_{N,ε}, or a near-feasible relaxation of it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: DVector<f64>,
    eps_cap: f64,
    strict: bool,
}

impl WeightVector {
    const SUM_TOL: f64 = 1e-9;
    const CAP_RTOL: f64 = 1e-12;

    /// Element of Δ_{N,eps_cap}: nonnegative, sums to one, capped.
    pub fn strict(w: DVector<f64>, eps_cap: f64) -> Result<Self> {
        Self::check_common(&w, eps_cap)?;
        let s = w.sum();
        if (s - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidWeights(format!("sum {s} is not 1")));
        }
        Ok(Self { w, eps_cap, strict: true })
    }

    /// Nonnegative, capped, with total mass in (0, 1].
    pub fn near_feasible(w: DVector<f64>, eps_cap: f64) -> Result<Self> {
        Self::check_common(&w, eps_cap)?;
        let s = w.sum();
        if !(s > 0.0 && s <= 1.0 + Self::SUM_TOL) {
            return Err(Error::InvalidWeights(format!("mass {s} outside (0, 1]")));
        }
        Ok(Self { w, eps_cap, strict: false })
    }

    pub fn uniform(n: usize) -> Self {
        Self { w: DVector::from_element(n, 1.0 / n as f64), eps_cap: 0.0, strict: true }
    }

    /// Uniform on `subset`, with the smallest eps_cap that admits it.
    pub fn uniform_on(n: usize, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::EmptyInput);
        }
        let k = subset.len() as f64;
        let mut w = DVector::zeros(n);
        for &i in subset {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, found: i + 1 });
            }
            w[i] = 1.0 / k;
        }
        let eps_cap = 1.0 - k / n as f64;
        Self::strict(w, eps_cap)
    }

    fn check_common(w: &DVector<f64>, eps_cap: f64) -> Result<()> {
        if w.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(0.0..1.0).contains(&eps_cap) {
            return Err(Error::InvalidWeights(format!("eps_cap {eps_cap} outside [0, 1)")));
        }
        let cap = box_cap(w.len(), eps_cap) * (1.0 + Self::CAP_RTOL);
        for (i, &x) in w.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidWeights(format!("w[{i}] = {x}")));
            }
            if x > cap {
                return Err(Error::InvalidWeights(format!("w[{i}] = {x} exceeds cap {cap}")));
            }
        }
        Ok(())
    }

    /// w / Σw as a strict member of Δ_{N,new_eps_cap}.
    pub fn normalized(&self, new_eps_cap: f64) -> Result<Self> {
        let s = self.mass();
        Self::strict(&self.w / s, new_eps_cap)
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn mass(&self) -> f64 {
        self.w.sum()
    }

    pub fn eps_cap(&self) -> f64 {
        self.eps_cap
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.w
    }

    /// Whether the weights lie in Δ_{N,eps} at the strict tolerances.
    pub fn in_polytope(&self, eps: f64) -> bool {
        (self.mass() - 1.0).abs() <= Self::SUM_TOL
            && Self::check_common(&self.w, eps).is_ok()
    }
}

/// Σᵢ wᵢXᵢ.
pub fn weighted_mean(samples: &SampleSet, w: &WeightVector) -> Result<DVector<f64>> {
    if w.len() != samples.n() {
        return Err(Error::DimensionMismatch { expected: samples.n(), found: w.len() });
    }
    Ok(samples.data().tr_mul(w.as_vector()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SubGaussian,
    BoundedCovariance,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::SubGaussian => write!(f, "sub-gaussian"),
            Regime::BoundedCovariance => write!(f, "bounded-covariance"),
        }
    }
}

/// User overrides keyed by constant index 1..=7.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantOverrides(pub BTreeMap<String, f64>);

impl ConstantOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, index: usize, value: f64) -> Self {
        self.0.insert(format!("c{index}"), value);
        self
    }

    fn parse(&self) -> Result<[Option<f64>; 7]> {
        let mut out = [None; 7];
        for (k, &v) in &self.0 {
            let idx = k
                .strip_prefix('c')
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|i| (1..=7).contains(i))
                .ok_or_else(|| Error::InvalidSpec(format!("unknown constant {k:?}")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ConstraintViolated(format!("{k} = {v} must be positive")));
            }
            out[idx - 1] = Some(v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSchedule {
    pub c: [f64; 7],
    pub eps: f64,
    pub regime: Regime,
}

/// The inequalities a schedule must satisfy, in checking order.
pub const INEQUALITIES: [&str; 8] = [
    "δ₂ + 2δ(c₂β) ≤ 0.1(c₂β)²",
    "(c₄/20)β² ≥ ε/10",
    "0.9c₄² ≥ 1.1c₂²",
    "c₅ ≥ c₂",
    "0.9c₅² ≥ c₄",
    "c₇ ≥ 1 + 2c₅β/sqrt(ln(1/ε))",
    "(c₁²c₆²)/2 ≥ c₄ + c₁c₇",
    "c₃ ≥ c₆ + 1 + 2c₅√ε/c₁",
];

// Relative slack for float comparisons in the checks.
const CHECK_RTOL: f64 = 1e-12;

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + CHECK_RTOL * rhs.abs().max(lhs.abs())
}

impl ConstantSchedule {
    pub fn c1(&self) -> f64 {
        self.c[0]
    }
    pub fn c2(&self) -> f64 {
        self.c[1]
    }
    pub fn c3(&self) -> f64 {
        self.c[2]
    }
    pub fn c4(&self) -> f64 {
        self.c[3]
    }
    pub fn c5(&self) -> f64 {
        self.c[4]
    }
    pub fn c6(&self) -> f64 {
        self.c[5]
    }
    pub fn c7(&self) -> f64 {
        self.c[6]
    }

    fn log_inv_eps(&self) -> f64 {
        (1.0 / self.eps).ln()
    }

    pub fn delta(&self) -> f64 {
        match self.regime {
            Regime::SubGaussian => self.c1() * self.eps * self.log_inv_eps().sqrt(),
            Regime::BoundedCovariance => self.c1() * self.eps.sqrt(),
        }
    }

    pub fn delta2(&self) -> f64 {
        match self.regime {
            Regime::SubGaussian => self.c1() * self.eps * self.log_inv_eps(),
            Regime::BoundedCovariance => self.c1(),
        }
    }

    pub fn beta(&self) -> f64 {
        match self.regime {
            Regime::SubGaussian => (self.eps * self.log_inv_eps()).sqrt(),
            Regime::BoundedCovariance => 1.0,
        }
    }

    /// Primal acceptance threshold on the SDP objective.
    pub fn threshold_primal(&self) -> f64 {
        let b2 = self.beta().powi(2);
        match self.regime {
            Regime::SubGaussian => 1.0 + self.c4() * b2,
            Regime::BoundedCovariance => self.c4() * b2,
        }
    }

    /// Dual certificate threshold on the SDP objective.
    pub fn threshold_dual(&self) -> f64 {
        let b2 = self.beta().powi(2);
        match self.regime {
            Regime::SubGaussian => 1.0 + 0.9 * self.c4() * b2,
            Regime::BoundedCovariance => 0.9 * self.c4() * b2,
        }
    }

    /// Guaranteed error radius c₃δ of an accepted estimate.
    pub fn error_radius(&self) -> f64 {
        self.c3() * self.delta()
    }

    /// Outer-loop budget for an initial guess within `c_med·ε·√d`.
    pub fn iteration_budget(&self, d: usize, c_med: f64) -> usize {
        let r0 = c_med * self.eps * (d as f64).sqrt();
        let target = self.c2() * self.beta();
        let steps = ((r0 / target).ln() / (4.0f64 / 3.0).ln()).ceil();
        let steps = if steps.is_finite() && steps > 0.0 { steps as usize } else { 0 };
        (steps + 4).max(4)
    }

    /// Evaluates every inequality; returns the first failed one.
    pub fn first_violation(&self) -> Option<&'static str> {
        let checks = self.inequality_values();
        checks.iter().position(|ok| !ok).map(|i| INEQUALITIES[i])
    }

    fn inequality_values(&self) -> [bool; 8] {
        let (eps, b) = (self.eps, self.beta());
        let (d, d2) = (self.delta(), self.delta2());
        let [c1, c2, c3, c4, c5, c6, c7] = self.c;
        let l = self.log_inv_eps();
        [
            le(d2 + 2.0 * d * c2 * b, 0.1 * (c2 * b).powi(2)),
            le(eps / 10.0, c4 / 20.0 * b * b),
            le(1.1 * c2 * c2, 0.9 * c4 * c4),
            le(c2, c5),
            le(c4, 0.9 * c5 * c5),
            le(1.0 + 2.0 * c5 * b / l.sqrt(), c7),
            le(c4 + c1 * c7, c1 * c1 * c6 * c6 / 2.0),
            le(c6 + 1.0 + 2.0 * c5 * eps.sqrt() / c1, c3),
        ]
    }
}

/// Smallest multiple of 0.1 that is ≥ x and satisfies `ok`.
fn round_up_tenth(x: f64, ok: impl Fn(f64) -> bool) -> f64 {
    let mut k = (x.max(0.0) * 10.0 - 1e-9).ceil().max(1.0);
    // Guards against float error at the boundary; terminates within a step or two.
    while !ok(k / 10.0) {
        k += 1.0;
    }
    k / 10.0
}

/// Default c₁: twice the population-level deviation at removal fraction 3ε,
/// expressed in units of δ and δ₂, so the good-sample conditions hold with
/// margin for moderate N.
pub fn default_c1(eps: f64, regime: Regime) -> f64 {
    let t = 3.0 * eps;
    let keep = 1.0 - t;
    let ratio = match regime {
        Regime::SubGaussian => {
            let g = Normal::standard();
            let l = (1.0 / eps).ln();
            // Mean shift from keeping the upper `keep` mass of one coordinate.
            let z = g.inverse_cdf(t);
            let m1 = g.pdf(z) / keep;
            // Variance deficit from keeping the smallest |g|.
            let zs = g.inverse_cdf(1.0 - t / 2.0);
            let small = 1.0 - (keep - 2.0 * zs * g.pdf(zs)) / keep;
            // Variance excess from keeping the largest |g|.
            let zl = g.inverse_cdf(1.0 - keep / 2.0);
            let large = (keep + 2.0 * zl * g.pdf(zl)) / keep - 1.0;
            let m2 = small.max(large);
            (m1 / (eps * l.sqrt())).max(m2 / (eps * l))
        }
        Regime::BoundedCovariance => {
            let m1 = (t / keep).sqrt();
            let m2 = 1.0 / keep;
            (m1 / eps.sqrt()).max(m2)
        }
    };
    round_up_tenth(2.0 * ratio, |_| true)
}

/// Resolves c₁…c₇ in dependency order, each as the smallest 1-decimal value
/// satisfying its inequalities, unless overridden. The resulting schedule is
/// checked in full.
pub fn build_constants(
    eps: f64,
    regime: Regime,
    overrides: &ConstantOverrides,
) -> Result<ConstantSchedule> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(Error::EpsOutOfRange(eps));
    }
    let ov = overrides.parse()?;
    let l = (1.0 / eps).ln();
    let mut s = ConstantSchedule { c: [0.0; 7], eps, regime };
    let pick = |i: usize, default: &dyn Fn() -> f64| ov[i - 1].unwrap_or_else(default);

    s.c[0] = pick(1, &|| default_c1(eps, regime));
    let (b, d, d2) = (s.beta(), s.delta(), s.delta2());

    // δ₂ + 2δ(c₂β) ≤ 0.1(c₂β)²: positive root of 0.1x² − 2δx − δ₂ in x = c₂β.
    s.c[1] = pick(2, &|| {
        let x = (2.0 * d + (4.0 * d * d + 0.4 * d2).sqrt()) / 0.2;
        round_up_tenth(x / b, |c2| le(d2 + 2.0 * d * c2 * b, 0.1 * (c2 * b).powi(2)))
    });
    let c2 = s.c[1];

    s.c[3] = pick(4, &|| {
        let lo = (1.1 / 0.9f64).sqrt() * c2;
        let lo2 = 2.0 * eps / (b * b);
        round_up_tenth(lo.max(lo2), |c4| {
            le(1.1 * c2 * c2, 0.9 * c4 * c4) && le(eps / 10.0, c4 / 20.0 * b * b)
        })
    });
    let c4 = s.c[3];

    s.c[4] = pick(5, &|| {
        round_up_tenth(c2.max((c4 / 0.9).sqrt()), |c5| le(c2, c5) && le(c4, 0.9 * c5 * c5))
    });
    let c5 = s.c[4];

    s.c[6] = pick(7, &|| {
        let lo = 1.0 + 2.0 * c5 * b / l.sqrt();
        round_up_tenth(lo, |c7| le(lo, c7))
    });
    let c7 = s.c[6];
    let c1 = s.c[0];

    s.c[5] = pick(6, &|| {
        let lo = (2.0 * (c4 + c1 * c7)).sqrt() / c1;
        round_up_tenth(lo, |c6| le(c4 + c1 * c7, c1 * c1 * c6 * c6 / 2.0))
    });
    let c6 = s.c[5];

    s.c[2] = pick(3, &|| {
        let lo = c6 + 1.0 + 2.0 * c5 * eps.sqrt() / c1;
        round_up_tenth(lo, |c3| le(lo, c3))
    });

    if let Some(name) = s.first_violation() {
        return Err(Error::ConstraintViolated(name.to_string()));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCase {
    PrimalAccepted,
    IterationBudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Primal,
    Dual,
}

/// One outer-loop step of an estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub nu: Vec<f64>,
    pub branch: Branch,
    /// Primal objective of the converted weights, when a primal candidate exists.
    pub primal_objective: Option<f64>,
    /// Dual objective of the certificate on the dual branch.
    pub dual_objective: Option<f64>,
    pub rho: f64,
    pub r_hat: Option<f64>,
    pub chosen_sign: Option<i8>,
    pub nu_next: Option<Vec<f64>>,
    pub sdp_calls: usize,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub mu_hat: DVector<f64>,
    pub iterations: usize,
    pub terminal_case: TerminalCase,
    pub sdp_calls: usize,
    pub solver_iterations: usize,
    pub error_vs_truth: Option<f64>,
    pub schedule: ConstantSchedule,
    /// Exactly re-evaluated primal objective of the returned weights.
    pub verified_primal_objective: Option<f64>,
    pub budget: usize,
    pub pruned_count: Option<usize>,
    pub trace: Vec<IterationRecord>,
}

impl EstimationReport {
    pub fn with_truth(mut self, truth: &GroundTruth) -> Self {
        self.error_vs_truth = Some(truth.error(&self.mu_hat));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_mean_hand_values() {
        let s = SampleSet::from_rows(&[vec![0.0], vec![4.0]]).unwrap();
        let w = WeightVector::strict(DVector::from_vec(vec![0.25, 0.75]), 0.5).unwrap();
        assert_eq!(weighted_mean(&s, &w).unwrap()[0], 3.0);
    }

    #[test]
    fn weighted_mean_of_copies() {
        let v = vec![1.5, -2.0, 7.25];
        let s = SampleSet::from_rows(&vec![v.clone(); 9]).unwrap();
        let m = weighted_mean(&s, &WeightVector::uniform(9)).unwrap();
        for j in 0..3 {
            assert!((m[j] - v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_mean_length_mismatch() {
        let s = SampleSet::from_rows(&[vec![0.0], vec![4.0]]).unwrap();
        let err = weighted_mean(&s, &WeightVector::uniform(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn sample_set_rejects_nan() {
        let err = SampleSet::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 2.0]]).unwrap_err();
        assert_eq!(err, Error::NonFinite { row: 1, col: 0 });
    }

    #[test]
    fn eps_range() {
        let ov = ConstantOverrides::new();
        assert_eq!(build_constants(0.4, Regime::SubGaussian, &ov), Err(Error::EpsOutOfRange(0.4)));
        assert!(build_constants(0.0, Regime::SubGaussian, &ov).is_err());
        assert!(build_constants(1.0 / 3.0, Regime::BoundedCovariance, &ov).is_err());
    }

    #[test]
    fn tiny_c4_names_the_right_inequality() {
        let ov = ConstantOverrides::new().with(4, 1e-9);
        let err = build_constants(0.1, Regime::SubGaussian, &ov).unwrap_err();
        assert_eq!(err, Error::ConstraintViolated("(c₄/20)β² ≥ ε/10".into()));
    }

    #[test]
    fn defaults_pass_on_grid() {
        for &eps in &[0.05, 0.1, 0.2, 0.3] {
            for regime in [Regime::SubGaussian, Regime::BoundedCovariance] {
                let s = build_constants(eps, regime, &ConstantOverrides::new()).unwrap();
                assert_eq!(s.first_violation(), None, "{eps} {regime}");
                assert!(s.c.iter().all(|c| *c > 0.0));
            }
        }
    }

    #[test]
    fn defaults_are_tight_to_one_decimal() {
        // Lowering any greedily chosen constant by 0.1 must break one of its inequalities.
        let s = build_constants(0.1, Regime::SubGaussian, &ConstantOverrides::new()).unwrap();
        for idx in [2usize, 4, 5, 7, 6, 3] {
            let mut t = s.clone();
            t.c[idx - 1] -= 0.1;
            if t.c[idx - 1] <= 0.0 {
                continue;
            }
            assert!(t.first_violation().is_some(), "c{idx} is not tight");
        }
    }

    #[test]
    fn unknown_override_key() {
        let mut ov = ConstantOverrides::new();
        ov.0.insert("c9".into(), 1.0);
        assert!(matches!(
            build_constants(0.1, Regime::SubGaussian, &ov),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn near_feasible_rescale() {
        let w = WeightVector::near_feasible(DVector::from_vec(vec![0.2, 0.3, 0.4]), 0.5).unwrap();
        assert!(!w.is_strict());
        let n = w.normalized(0.4).unwrap();
        assert!(n.is_strict());
        assert!((n.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn thresholds_by_regime() {
        let ov = ConstantOverrides::new();
        let s = build_constants(0.1, Regime::SubGaussian, &ov).unwrap();
        let b2 = 0.1 * 10f64.ln();
        assert!((s.threshold_primal() - (1.0 + s.c4() * b2)).abs() < 1e-12);
        let b = build_constants(0.1, Regime::BoundedCovariance, &ov).unwrap();
        assert_eq!(b.beta(), 1.0);
        assert!((b.threshold_dual() - 0.9 * b.c4()).abs() < 1e-12);
    }
}
