//! Covering side as a smooth low-rank problem.
//!
//! With M′ = LLᵀ and the optimal y′ for that M′, the covering objective is
//! tr(LLᵀ) + cap·Σ(1 − ρ‖Lᵀvᵢ‖²)₊. Replacing (·)₊ by a softplus of width μ
//! gives a smooth function of L whose gradient exposes packing weights
//! wᵢ = cap·sigmoid((1 − ρqᵢ)/μ). Each checkpoint scales those weights onto the
//! feasible set and pairs them with the exact covering value, so every
//! reported pair is certified regardless of how well L was optimized. μ is
//! lowered on a fixed schedule and the rank of L grows when all its columns
//! are in use.

use log::trace;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, stage_rng, sym_eigen_desc};
use crate::sdp::{CoveringSolution, PackingInstance, PsdMatrix};

use super::lbfgs::{self, LbfgsOptions, LbfgsStop};
use super::{finalize, SolveOptions, SolveOutcome, SolverConfig};

const MU_START: f64 = 3e-2;
const MU_FACTOR: f64 = 1.0 / 3.0;
const MU_MIN: f64 = 1e-7;
const STAGE_ITERS: usize = 400;
const CHECK_EVERY: usize = 50;
/// A factor whose smallest singular value exceeds this fraction of the largest
/// is treated as saturated.
const SATURATION: f64 = 0.05;

struct Problem<'a> {
    v: &'a DMatrix<f64>,
    rho: f64,
    cap: f64,
    d: usize,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Problem<'_> {
    fn as_factor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let k = x.len() / self.d;
        DMatrix::from_column_slice(self.d, k, x.as_slice())
    }

    fn value_grad(&self, x: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
        let l = self.as_factor(x);
        let mut vl = self.v * &l;
        let q = linalg::row_norms_sq(&vl);
        let mut f = l.norm_squared();
        for (i, mut row) in vl.row_iter_mut().enumerate() {
            let z = (1.0 - self.rho * q[i]) / mu;
            f += self.cap * mu * softplus(z);
            row *= sigmoid(z);
        }
        let g = &l * 2.0 - self.v.tr_mul(&vl) * (2.0 * self.rho * self.cap);
        (f, DVector::from_column_slice(g.as_slice()))
    }

    /// Certified pair from the factor at smoothing width μ.
    fn certify(&self, l: &DMatrix<f64>, mu: f64) -> Checkpoint {
        let q = linalg::row_norms_sq(&(self.v * l));
        let w = q.map(|qi| self.cap * sigmoid((1.0 - self.rho * qi) / mu));
        let s = linalg::weighted_gram(self.v, &w) * self.rho;
        let lam = linalg::lambda_max(&s);
        // The extra ulp-scale factor keeps the rescaled point strictly feasible.
        let shrink = lam.max(1.0) * (1.0 + 1e-12);
        let raw = w;
        let w = &raw / shrink;
        let packing = w.sum();
        let covering = l.norm_squared() + q.iter().map(|qi| self.cap * (1.0 - self.rho * qi).max(0.0)).sum::<f64>();
        Checkpoint { w, raw, lam, packing, covering }
    }
}

struct Checkpoint {
    w: DVector<f64>,
    /// Weights before scaling onto the feasible set, and λ_max(ρS(raw)).
    raw: DVector<f64>,
    lam: f64,
    packing: f64,
    covering: f64,
}

fn initial_factor(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stage_rng(seed, 0x51);
    let scale = 0.01 / (k as f64).sqrt();
    DMatrix::from_fn(d, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

/// Rebuilds L from its significant singular directions and adds directions u
/// with uᵀρS(w)u > `level` outside their span as small new columns, up to
/// `limit` columns in total.
fn expand(l: &DMatrix<f64>, p: &Problem<'_>, w: &DVector<f64>, level: f64, limit: usize) -> (DMatrix<f64>, usize) {
    let d = l.nrows();
    let svd = l.clone().svd(true, false);
    let (u, sv) = (svd.u.expect("left vectors"), svd.singular_values);
    let top = sv.max();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..sv.len() {
        if sv[j] > 1e-3 * top {
            basis.push(u.column(j).into_owned());
            cols.push(u.column(j) * sv[j]);
        }
    }
    let top = top.max(1e-3);
    let s = linalg::weighted_gram(p.v, w) * p.rho;
    let (vals, vecs) = sym_eigen_desc(&s);
    let limit = limit.min(d);
    let kept = cols.len();
    for j in 0..d {
        if cols.len() >= limit || vals[j] <= level {
            break;
        }
        let mut u = vecs.column(j).into_owned();
        for b in &basis {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
        let n = u.norm();
        if n < 0.5 {
            continue;
        }
        u /= n;
        cols.push(&u * (0.1 * top));
        basis.push(u);
    }
    if cols.is_empty() {
        return (l.clone(), 0);
    }
    let added = cols.len() - kept;
    (DMatrix::from_columns(&cols), added)
}

fn collapsed(l: &DMatrix<f64>) -> bool {
    l.norm_squared() < 1e-16
}

fn saturated(l: &DMatrix<f64>) -> bool {
    let g = l.tr_mul(l);
    let vals = linalg::symmetrize(&g).symmetric_eigenvalues();
    let (lo, hi) = (vals.min().max(0.0).sqrt(), vals.max().max(0.0).sqrt());
    hi > 0.0 && lo > SATURATION * hi
}

pub(super) fn solve(inst: &PackingInstance, cfg: &SolverConfig, opts: &SolveOptions) -> Result<SolveOutcome> {
    let d = inst.dim();
    let p = Problem { v: inst.centered(), rho: inst.rho(), cap: inst.cap(), d };
    let mut l = match &opts.warm_start {
        Some(l0) if l0.nrows() == d && l0.ncols() >= 1 && l0.iter().all(|x| x.is_finite()) && !collapsed(l0) => {
            l0.clone()
        }
        _ => initial_factor(d, cfg.initial_rank.clamp(1, d), cfg.seed),
    };

    let mut used = 0usize;
    let mut mu = MU_START;
    let mut best: Option<(Checkpoint, DMatrix<f64>)> = None;

    let done = |c: &Checkpoint| -> (bool, bool) {
        let conv = c.covering - c.packing <= cfg.tol * c.packing;
        let dec = opts.stop.map(|s| s.decisive(c.packing, c.covering)).unwrap_or(false);
        (conv, dec)
    };

    loop {
        if used >= cfg.budget {
            break;
        }
        let stage_max = STAGE_ITERS.min(cfg.budget - used);
        let lopts = LbfgsOptions { max_iter: stage_max, ..Default::default() };
        let mut hit: Option<(Checkpoint, DMatrix<f64>)> = None;
        let x0 = DVector::from_column_slice(l.as_slice());
        let res = lbfgs::minimize(
            |x| p.value_grad(x, mu),
            x0,
            &lopts,
            |it, x, _| {
                if it % CHECK_EVERY != 0 {
                    return false;
                }
                let lf = p.as_factor(x);
                let c = p.certify(&lf, mu);
                let (conv, dec) = done(&c);
                if conv || dec {
                    hit = Some((c, lf));
                    return true;
                }
                false
            },
        );
        used += res.iterations.max(1);
        l = p.as_factor(&res.x);
        let (c, lf) = match hit {
            Some(h) => h,
            None => {
                let c = p.certify(&l, mu);
                (c, l.clone())
            }
        };
        let (conv, dec) = done(&c);
        trace!(
            "mu={mu:.1e} k={} lam={:.6} iters={} packing={:.6} covering={:.6} stop={:?}",
            l.ncols(),
            c.lam,
            used,
            c.packing,
            c.covering,
            res.stop
        );
        if conv || dec {
            return finish(inst, c, lf, used, conv);
        }
        // L = 0 is a stationary point of the smoothed objective.
        if collapsed(&l) {
            l = initial_factor(d, l.ncols(), cfg.seed.wrapping_add(used as u64));
        }
        let better = best.as_ref().map(|(b, _)| c.covering - c.packing < b.covering - b.packing).unwrap_or(true);
        let stage_over = res.stop != LbfgsStop::MaxIter || res.iterations >= STAGE_ITERS;
        if l.ncols() < d && saturated(&l) {
            l = expand(&l, &p, &c.raw, f64::NEG_INFINITY, 2 * l.ncols()).0;
        } else if c.lam > 1.0 + cfg.tol / 4.0 && stage_over {
            // Directions where the weights overshoot but L has no mass.
            let k = l.ncols();
            let added;
            (l, added) = expand(&l, &p, &c.raw, 1.0 + cfg.tol / 4.0, k + (k / 2).max(1));
            trace!("added {added} directions");
            if added == 0 {
                mu = (mu * MU_FACTOR).max(MU_MIN);
            } else {
                // New columns need a wider smoothing to move off the kink.
                mu = (mu / (MU_FACTOR * MU_FACTOR)).min(MU_START);
            }
        } else if stage_over {
            mu = (mu * MU_FACTOR).max(MU_MIN);
        }
        if better {
            best = Some((c, lf));
        }
    }
    let gap = best.map(|(b, _)| (b.covering - b.packing) / b.covering).unwrap_or(f64::NAN);
    trace!("smoothed solver budget exhausted with gap {gap:.3e}");
    Err(Error::BudgetExhausted(cfg.budget))
}

fn finish(inst: &PackingInstance, c: Checkpoint, l: DMatrix<f64>, used: usize, converged: bool) -> Result<SolveOutcome> {
    let covering = CoveringSolution::completing(inst, PsdMatrix::LowRank(l.clone()));
    finalize(inst, c.w, covering, used, converged, Some(l))
}
