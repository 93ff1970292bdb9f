//! Exact small-scale oracle: a log-barrier interior-point method applied to
//! the primal SDP and to the packing SDP. Both runs return a feasible point
//! and a dual certificate, so the optimum is bracketed by exactly evaluated
//! quantities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{self, lambda_max, sym_eigen_desc};
use crate::model::WeightVector;
use crate::sdp::{
    dual_objective, primal_objective_with, CoveringSolution, DualCertificate, PackingInstance,
    PsdMatrix, SdpContext,
};

use super::{finalize, PositiveSdpSolver, SolveOptions, SolveOutcome};

pub const REFERENCE_MAX_N: usize = 64;
pub const REFERENCE_MAX_D: usize = 8;

/// Barrier parameter growth per outer step.
const GROWTH: f64 = 8.0;
/// Stop once (#barrier terms)/s drops below this.
const FINAL_GAP: f64 = 1e-9;

fn check_size(n: usize, d: usize) -> Result<()> {
    if n > REFERENCE_MAX_N || d > REFERENCE_MAX_D {
        return Err(Error::SizeLimitExceeded(format!(
            "N = {n}, d = {d}; limits are N ≤ {REFERENCE_MAX_N}, d ≤ {REFERENCE_MAX_D}"
        )));
    }
    Ok(())
}

/// minimize s·cᵀz − logdet(Z₀ + Σ zⱼFⱼ) − Σᵢ log zᵢ − Σᵢ log(cap − zᵢ)
/// over z with the box on the first `nbox` coordinates and optional aᵀz = b
/// (kept from a feasible start). Returns z and R = Z(z)⁻¹ at the end of the path.
struct Barrier<'a> {
    z0: DMatrix<f64>,
    f: &'a [DMatrix<f64>],
    c: DVector<f64>,
    nbox: usize,
    cap: f64,
    eq: Option<DVector<f64>>,
}

impl Barrier<'_> {
    fn lmi(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.z0.clone();
        for (j, fj) in self.f.iter().enumerate() {
            m += fj * z[j];
        }
        linalg::symmetrize(&m)
    }

    fn strictly_feasible(&self, z: &DVector<f64>) -> Option<Cholesky<f64, Dyn>> {
        for i in 0..self.nbox {
            if !(z[i] > 0.0 && z[i] < self.cap) {
                return None;
            }
        }
        Cholesky::new(self.lmi(z))
    }

    fn phi(&self, z: &DVector<f64>, s: f64) -> Option<f64> {
        let ch = self.strictly_feasible(z)?;
        let logdet: f64 = ch.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        let mut v = s * self.c.dot(z) - logdet;
        for i in 0..self.nbox {
            v -= z[i].ln() + (self.cap - z[i]).ln();
        }
        Some(v)
    }

    fn run(&self, mut z: DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
        let m = z.len();
        let d = self.z0.nrows();
        let terms = (d + 2 * self.nbox) as f64;
        let mut s = 1.0;
        let mut stalled = false;
        let mut centered = s;
        while !stalled {
            for _ in 0..200 {
                let ch = self
                    .strictly_feasible(&z)
                    .ok_or_else(|| Error::VerificationFailed("barrier iterate left the interior".into()))?;
                let r = ch.inverse();
                let g_mats: Vec<DMatrix<f64>> = self.f.iter().map(|fj| &r * fj).collect();
                let mut grad = &self.c * s;
                let mut hess = DMatrix::zeros(m, m);
                for j in 0..m {
                    grad[j] -= g_mats[j].trace();
                    for k in 0..=j {
                        let h = g_mats[j].component_mul(&g_mats[k].transpose()).sum();
                        hess[(j, k)] = h;
                        hess[(k, j)] = h;
                    }
                }
                for i in 0..self.nbox {
                    let (a, b) = (z[i], self.cap - z[i]);
                    grad[i] += -1.0 / a + 1.0 / b;
                    hess[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
                }
                let dz = match self.newton_step(&hess, &grad) {
                    Ok(dz) => dz,
                    // Late on the path the system can become numerically singular;
                    // the current point is already centered for the previous s.
                    Err(_) if s > 1.0 => {
                        stalled = true;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                let dec = -grad.dot(&dz);
                if dec / 2.0 <= 1e-12 {
                    break;
                }
                let f0 = self.phi(&z, s).expect("current iterate is feasible");
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let zn = &z + &dz * t;
                    if let Some(fv) = self.phi(&zn, s) {
                        // Inside the quadratic region the full step is safe, and the
                        // Armijo test is below the resolution of φ at large s.
                        if (t == 1.0 && dec < 0.2) || fv <= f0 - 0.25 * t * dec {
                            z = zn;
                            moved = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if stalled {
                log::debug!("barrier stalled at s = {s:.3e}; keeping s = {centered:.3e}");
                break;
            }
            centered = s;
            if terms / s < FINAL_GAP {
                break;
            }
            s *= GROWTH;
        }
        let r = self
            .strictly_feasible(&z)
            .ok_or_else(|| Error::VerificationFailed("barrier iterate left the interior".into()))?
            .inverse();
        Ok((z, linalg::symmetrize(&r), centered))
    }

    fn newton_step(&self, hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
        let m = grad.len();
        // Symmetric diagonal scaling keeps the factorization usable when the
        // barrier Hessian spans many orders of magnitude.
        let scale = hess.diagonal().map(|h| if h > 0.0 { 1.0 / h.sqrt() } else { 1.0 });
        let hs = DMatrix::from_fn(m, m, |i, j| hess[(i, j)] * scale[i] * scale[j]);
        let gs = grad.component_mul(&scale);
        let sol = match &self.eq {
            None => Cholesky::new(hs.clone())
                .map(|ch| ch.solve(&(-&gs)))
                .or_else(|| hs.lu().solve(&(-&gs)))
                .ok_or_else(|| Error::VerificationFailed("singular barrier Hessian".into()))?,
            Some(a) => {
                let a = a.component_mul(&scale);
                let mut kkt = DMatrix::zeros(m + 1, m + 1);
                kkt.view_mut((0, 0), (m, m)).copy_from(&hs);
                for j in 0..m {
                    kkt[(j, m)] = a[j];
                    kkt[(m, j)] = a[j];
                }
                let mut rhs = DVector::zeros(m + 1);
                rhs.rows_mut(0, m).copy_from(&(-&gs));
                kkt.lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::VerificationFailed("singular KKT system".into()))?
                    .rows(0, m)
                    .into_owned()
            }
        };
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::VerificationFailed("non-finite Newton step".into()));
        }
        Ok(sol.component_mul(&scale))
    }
}

/// Oracle solution of the primal SDP at (ν, ε).
#[derive(Debug, Clone)]
pub struct ReferencePrimal {
    /// Exact λ_max at the returned weights (an upper bound on OPT).
    pub upper: f64,
    /// Dual objective of the returned certificate (a lower bound on OPT).
    pub lower: f64,
    pub w: WeightVector,
    pub certificate: DualCertificate,
}

impl ReferencePrimal {
    pub fn opt(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// OPT_{ν,ε} of the primal SDP by interior point, with a certified bracket.
pub fn reference_primal(ctx: &SdpContext) -> Result<ReferencePrimal> {
    let (n, d) = (ctx.n(), ctx.dim());
    check_size(n, d)?;
    let v = ctx.centered();
    let eps = ctx.eps();
    let cap = ctx.cap();

    if n as f64 * cap <= 1.0 + 1e-12 {
        // ε = 0: the polytope is the single uniform point.
        let w = WeightVector::strict(DVector::from_element(n, 1.0 / n as f64), eps)?;
        return primal_from(ctx, w, None);
    }

    let mut f: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let r = v.row(i).transpose();
            -(&r * r.transpose())
        })
        .collect();
    f.push(DMatrix::identity(d, d));
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let mut a = DVector::from_element(n + 1, 1.0);
    a[n] = 0.0;
    let w0 = DVector::from_element(n, 1.0 / n as f64);
    let t0 = lambda_max(&linalg::weighted_gram(v, &w0)).max(0.0) + 1.0;
    let mut z0 = w0.clone().resize_vertically(n + 1, 0.0);
    z0[n] = t0;
    let barrier = Barrier { z0: DMatrix::zeros(d, d), f: &f, c, nbox: n, cap, eq: Some(a) };
    let (z, r, _) = barrier.run(z0)?;
    let w = z.rows(0, n).into_owned();
    let w = WeightVector::strict(&w / w.sum(), eps)?;
    primal_from(ctx, w, Some(r))
}

fn primal_from(ctx: &SdpContext, w: WeightVector, r: Option<DMatrix<f64>>) -> Result<ReferencePrimal> {
    let upper = primal_objective_with(ctx, &w, usize::MAX)?;
    let m = match r {
        Some(r) => &r / r.trace(),
        None => {
            let s = linalg::weighted_gram(ctx.centered(), w.as_vector());
            let (_, vecs) = sym_eigen_desc(&s);
            let u = vecs.column(0).into_owned();
            &u * u.transpose()
        }
    };
    let certificate = DualCertificate::explicit(m);
    let lower = dual_objective(ctx, &certificate)?;
    Ok(ReferencePrimal { upper, lower, w, certificate })
}

/// Oracle solution of the packing/covering pair.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// Feasible packing value (lower bound on OPT).
    pub packing_value: f64,
    /// Feasible covering value (upper bound on OPT).
    pub covering_value: f64,
    pub w_prime: DVector<f64>,
    pub covering: CoveringSolution,
}

impl ReferenceSolution {
    pub fn opt(&self) -> f64 {
        0.5 * (self.packing_value + self.covering_value)
    }
}

pub fn reference_solve(inst: &PackingInstance) -> Result<ReferenceSolution> {
    let (n, d) = (inst.n(), inst.dim());
    check_size(n, d)?;
    let v = inst.centered();
    let rho = inst.rho();
    let cap = inst.cap();
    if inst.is_degenerate() {
        let w = DVector::from_element(n, cap);
        let covering = CoveringSolution::completing(inst, PsdMatrix::Dense(DMatrix::zeros(d, d)));
        return Ok(ReferenceSolution { packing_value: w.sum(), covering_value: covering.value(), w_prime: w, covering });
    }
    let f: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let r = v.row(i).transpose();
            -(&r * r.transpose()) * rho
        })
        .collect();
    let half = DVector::from_element(n, cap / 2.0);
    let lam = lambda_max(&linalg::weighted_gram(v, &half)) * rho;
    let theta = if lam > 0.5 { 0.5 / lam } else { 1.0 };
    let start = half * theta;
    let barrier = Barrier {
        z0: DMatrix::identity(d, d),
        f: &f,
        c: DVector::from_element(n, -1.0),
        nbox: n,
        cap,
        eq: None,
    };
    let (w, r, s) = barrier.run(start)?;
    let covering = CoveringSolution::completing(inst, PsdMatrix::Dense(r / s));
    let packing_value = w.sum();
    let covering_value = covering.value();
    Ok(ReferenceSolution { packing_value, covering_value, w_prime: w, covering })
}

/// d = 1: the primal is a fractional knapsack, solved greedily by filling the
/// smallest squared deviations up to the cap.
pub fn greedy_primal_1d(values: &[f64], nu: f64, eps: f64) -> f64 {
    let n = values.len();
    let cap = 1.0 / ((1.0 - eps) * n as f64);
    let mut sq: Vec<f64> = values.iter().map(|x| (x - nu) * (x - nu)).collect();
    sq.sort_by(|a, b| a.total_cmp(b));
    let mut left = 1.0;
    let mut total = 0.0;
    for s in sq {
        let take = cap.min(left);
        total += take * s;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    total
}

/// Oracle as a drop-in solver (exact to the barrier precision).
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceSolver;

impl PositiveSdpSolver for ReferenceSolver {
    fn tol(&self) -> f64 {
        1e-7
    }

    fn solve(&self, inst: &PackingInstance, _opts: &SolveOptions) -> Result<SolveOutcome> {
        let r = reference_solve(inst)?;
        let d = inst.dim();
        let m = match &r.covering.m_prime {
            PsdMatrix::Dense(m) => m.clone(),
            other => other.to_dense(),
        };
        let _ = d;
        let covering = CoveringSolution::completing(inst, PsdMatrix::Dense(m));
        finalize(inst, r.w_prime, covering, 0, true, None)
    }

    fn tightened(&self, _factor: f64) -> Box<dyn PositiveSdpSolver> {
        Box::new(*self)
    }
}
