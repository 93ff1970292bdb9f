//! Conversions from the packing/covering pair back to the primal/dual pair.

use crate::error::{Error, Result};
use crate::model::WeightVector;

use super::{build_packing, CoveringSolution, DualCertificate, SdpContext, FEAS_TOL};

/// w = w′/‖w′‖₁, an element of Δ_{N,2ε}. Requires ‖w′‖₁ ≥ 1 − ε/10 and
/// re-verifies packing feasibility of w′.
pub fn convert_primal(ctx: &SdpContext, w_prime: &WeightVector) -> Result<WeightVector> {
    let inst = build_packing(ctx)?;
    let eps = ctx.eps();
    let mass = w_prime.mass();
    let required = 1.0 - eps / 10.0;
    if mass < required * (1.0 - 1e-12) {
        return Err(Error::InsufficientMass { mass, required });
    }
    let violation = inst.packing_violation(w_prime.as_vector())?;
    if violation > FEAS_TOL {
        return Err(Error::InfeasibleInput { what: "packing constraint".into(), violation });
    }
    let cap = inst.cap();
    let eps2 = (2.0 * eps).min(1.0 - 1e-12);
    if (mass - 1.0).abs() <= 1e-9 && w_prime.as_vector().iter().all(|&x| x <= cap) {
        return WeightVector::strict(w_prime.as_vector().clone(), eps2);
    }
    // Entries within the verification slack of the cap are clamped onto it.
    let clamped = w_prime.as_vector().map(|x| x.min(cap));
    WeightVector::strict(&clamped / clamped.sum(), eps2)
}

/// M = M′/tr(M′), together with the certified lower bound
/// (1 − ‖y′‖₁)/(ρ·tr(M′)) on its dual objective.
pub fn convert_dual(ctx: &SdpContext, cov: &CoveringSolution) -> Result<(DualCertificate, f64)> {
    let inst = build_packing(ctx)?;
    let tr = cov.m_prime.trace();
    let y1 = cov.y_prime.sum();
    if tr + y1 > 1.0 + 1e-12 {
        return Err(Error::TraceBudgetExceeded(tr + y1));
    }
    if !(tr >= 1e-12) {
        return Err(Error::ZeroMatrix(tr));
    }
    let slack = inst.covering_slack(cov)?;
    if slack < -FEAS_TOL {
        return Err(Error::InfeasibleInput { what: "covering constraint".into(), violation: -slack });
    }
    let cert = DualCertificate::normalized(&cov.m_prime)?;
    let bound = (1.0 - y1) / (inst.rho() * tr);
    Ok((cert, bound))
}
