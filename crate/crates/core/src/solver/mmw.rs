//! Primal-dual matrix multiplicative weights for the block packing problem.
//!
//! The weight matrix exp(Σ xᵢAᵢ) splits into a d×d exponential of the top block
//! and N scalar exponentials of the diagonal bottom block. Constraints whose
//! current dot product is within (1+η) of the smallest are grown by (1+η/4).
//! The averaged normalized exponentials form the covering side.

use std::sync::Arc;

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen_desc};
use crate::sdp::{CoveringSolution, PackingInstance, PsdMatrix};

use super::implicit::{ImplicitBlock, ImplicitPsdOperator, IMPLICIT_DENSE_THRESHOLD};
use super::{finalize, SolveOptions, SolveOutcome, SolverConfig};

struct Run {
    w: DVector<f64>,
    m_prime: PsdMatrix,
    iterations: usize,
}

fn run_once(inst: &PackingInstance, eta: f64, max_iter: usize) -> Run {
    let v = inst.centered();
    let (n, d) = (inst.n(), inst.dim());
    let rho = inst.rho();
    let c = (1.0 - inst.eps()) * n as f64;
    let norms = linalg::row_norms_sq(v);
    let width = norms.max() * rho + c;
    let mut x = DVector::from_element(n, 1.0 / (n as f64 * width));
    let k = ((d + n) as f64).ln() / eta;
    let alpha = eta / 4.0;

    let implicit = d > IMPLICIT_DENSE_THRESHOLD;
    let mut top_sum = DMatrix::zeros(d, d);
    let mut blocks = Vec::new();
    let mut bot_sum = DVector::zeros(n);
    let mut t = 0usize;

    while t < max_iter {
        let psi = linalg::weighted_gram(v, &x) * rho;
        let (vals, vecs) = sym_eigen_desc(&psi);
        let bottom = &x * c;
        let m = vals[0].max(bottom.max());
        if m >= k {
            break;
        }
        let ev = vals.map(|l| (l - m).exp());
        let mut scaled = vecs.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= ev[j];
        }
        let et = scaled * vecs.transpose();
        let eb = bottom.map(|b| (b - m).exp());
        let top_trace = ev.sum();
        let tr = top_trace + eb.sum();
        let p = et / tr;
        let pb = eb / tr;
        let dots = linalg::quad_forms(v, &p) * rho + &pb * c;
        if implicit {
            blocks.push(ImplicitBlock { x: x.clone(), shift: m, normalizer: tr, top_trace, lambda_max: vals[0].max(0.0) });
        } else {
            top_sum += &p;
        }
        bot_sum += &pb;
        t += 1;
        let lo = dots.min();
        for i in 0..n {
            if dots[i] <= (1.0 + eta) * lo {
                x[i] *= 1.0 + alpha;
            }
        }
    }

    // Packing side: scale the weights onto the feasible set.
    let s = linalg::weighted_gram(v, &x) * rho;
    let lam = linalg::lambda_max(&s).max((&x * c).max()) * (1.0 + 1e-12);
    let w = &x / lam;

    // Covering side: the average, scaled so the tightest constraint is met.
    let tt = t.max(1) as f64;
    let bot = bot_sum / tt;
    let top = if implicit && !blocks.is_empty() {
        PsdMatrix::Implicit(ImplicitPsdOperator::new(Arc::new(v.clone()), rho, blocks, 1.0, eta / 10.0))
    } else {
        PsdMatrix::Dense(linalg::symmetrize(&(top_sum / tt)))
    };
    let dots = top.quad_forms(v) * rho + &bot * c;
    let lo = dots.min();
    let m_prime = if lo > 0.0 { top.scaled(1.0 / lo) } else { top };
    Run { w, m_prime, iterations: t }
}

pub(super) fn solve(inst: &PackingInstance, cfg: &SolverConfig, _opts: &SolveOptions) -> Result<SolveOutcome> {
    let mut eta = cfg.tol;
    let mut used = 0;
    while used < cfg.budget {
        let run = run_once(inst, eta, cfg.budget - used);
        used += run.iterations.max(1);
        let covering = CoveringSolution::completing(inst, run.m_prime);
        let out = finalize(inst, run.w, covering, used, false, None)?;
        trace!("mmw eta={eta:.2e} iters={used} gap={:.3e}", out.relative_gap());
        if out.covering_value - out.packing_value <= cfg.tol * out.packing_value {
            return Ok(SolveOutcome { converged: true, ..out });
        }
        eta /= 2.0;
    }
    Err(Error::BudgetExhausted(cfg.budget))
}
