mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use robust_mean::sdp::*;
use robust_mean::solver::{reference_primal, ReferenceSolver, SolverConfig};
use robust_mean::*;

#[test]
fn primal_matches_closed_form_two_by_two() {
    for seed in 0..20 {
        let ctx = random_ctx(seed, 6, 2, 0.2);
        let mut r = rng(seed + 50);
        let w = random_weights(&mut r, 6, 0.2);
        let v = ctx.centered();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..6 {
            a += w.as_vector()[i] * v[(i, 0)] * v[(i, 0)];
            b += w.as_vector()[i] * v[(i, 0)] * v[(i, 1)];
            c += w.as_vector()[i] * v[(i, 1)] * v[(i, 1)];
        }
        let closed = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let got = primal_objective(&ctx, &w).unwrap();
        assert!((got - closed).abs() <= 1e-10 * closed.max(1.0), "{got} vs {closed}");
    }
}

#[test]
fn dual_matches_brute_force_selection() {
    // (1−ε)N = 8 is integral, so every selection rule agrees.
    for seed in 0..10 {
        let ctx = random_ctx(seed, 10, 3, 0.2);
        let mut r = rng(seed + 7);
        let y = DVector::from_fn(3, |_, _| r.random::<f64>() - 0.5).normalize();
        let cert = DualCertificate::explicit(&y * y.transpose());
        let q: Vec<f64> = (0..10).map(|i| ctx.centered().row(i).transpose().dot(&y).powi(2)).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << 10 {
            if mask.count_ones() == 8 {
                let s: f64 = (0..10).filter(|i| mask >> i & 1 == 1).map(|i| q[i]).sum();
                best = best.min(s / 8.0);
            }
        }
        let got = dual_objective(&ctx, &cert).unwrap();
        assert!((got - best).abs() <= 1e-12 * best.max(1.0));
    }
}

#[test]
fn convert_primal_cap_bound_across_eps() {
    for k in 1..33 {
        let eps = k as f64 / 100.0;
        let n = 40;
        let cap = 1.0 / ((1.0 - eps) * n as f64);
        let mass = 1.0 - eps / 10.0;
        let full = (mass / cap).floor() as usize;
        let mut w = vec![cap; full];
        w.push(mass - cap * full as f64);
        w.resize(n, 0.0);
        let rescaled_max = cap / mass;
        assert!(rescaled_max <= 1.0 / ((1.0 - 2.0 * eps) * n as f64), "eps {eps}");

        // All samples at ν make any capped w′ packing-feasible.
        let s = Arc::new(SampleSet::from_rows(&vec![vec![0.5, -0.5]; n]).unwrap());
        let ctx = SdpContext::new(s, DVector::from_vec(vec![0.5, -0.5]), eps).unwrap().with_rho(1.0).unwrap();
        let wp = WeightVector::near_feasible(DVector::from_vec(w), eps).unwrap();
        let out = convert_primal(&ctx, &wp).unwrap();
        assert!(out.in_polytope((2.0 * eps).min(0.999)));
        assert!(out.as_vector().max() <= rescaled_max * (1.0 + 1e-12));
    }
}

#[test]
fn two_cluster_certificate_points_back() {
    let eps = 0.1;
    let sched = build_constants(eps, Regime::SubGaussian, &ConstantOverrides::new()).unwrap();
    let mut rows = Vec::new();
    let mut r = rng(3);
    for i in 0..40 {
        let g: f64 = r.random::<f64>() - 0.5;
        let h: f64 = r.random::<f64>() - 0.5;
        if i < 36 {
            rows.push(vec![g, h]);
        } else {
            rows.push(vec![3.0 + g, 3.0 + h]);
        }
    }
    let s = Arc::new(SampleSet::from_rows(&rows).unwrap());
    let mu = DVector::zeros(2);
    let nu = DVector::from_vec(vec![-12.0, 9.0]);
    let ctx = SdpContext::new(s, nu.clone(), eps).unwrap();
    let res = rho_search(&ctx, &sched, &ReferenceSolver, &SearchOptions::default()).unwrap();
    match res.outcome {
        RhoOutcome::GoodDual { certificate, objective, .. } => {
            assert!(objective >= sched.threshold_dual());
            let (v1, _) = certificate.top_eigenvector(1e-6, 1).unwrap();
            let dir = (&nu - &mu).normalize();
            assert!(v1.dot(&dir).abs() >= 0.8);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn search_outputs_sit_inside_the_oracle_bracket() {
    let eps = 0.1;
    let sched = build_constants(eps, Regime::SubGaussian, &ConstantOverrides::new()).unwrap();
    let solver = SolverConfig::new(eps / 30.0);
    let mut seen_dual = 0;
    for seed in 0..8 {
        let base = random_ctx(seed, 30, 3, eps);
        // Alternate near and far guesses to exercise both outcomes.
        let nu = if seed % 2 == 0 { base.nu().clone() } else { base.nu() * 8.0 + DVector::from_element(3, 3.0) };
        let ctx = base.with_nu(nu.clone()).unwrap();
        let two = SdpContext::new(ctx.samples().clone(), nu, 2.0 * eps).unwrap();
        let v1 = reference_primal(&ctx).unwrap().opt();
        let v2 = reference_primal(&two).unwrap().opt();
        let res = rho_search(&ctx, &sched, &solver, &SearchOptions::default()).unwrap();
        let upper = v1 / (1.0 - eps / 10.0) * (1.0 + eps / 30.0);
        let (primal, dual) = match res.outcome {
            RhoOutcome::GoodPrimal { objective, .. } => (objective, None),
            RhoOutcome::GoodDual { objective, primal_candidate, .. } => {
                seen_dual += 1;
                (primal_candidate.unwrap().1, Some(objective))
            }
        };
        assert!(primal >= v2 * (1.0 - 1e-6) && primal <= upper, "seed {seed}: {primal} vs [{v2}, {upper}]");
        if let Some(dv) = dual {
            assert!(dv >= (1.0 - eps / 10.0) * v2 * (1.0 - 1e-6) && dv <= v1 * (1.0 + 1e-6), "seed {seed}: {dv}");
        }
    }
    assert!(seen_dual > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weak_duality(seed in any::<u64>(), n in 3usize..20, d in 1usize..5, eps in 0.0f64..0.3) {
        let ctx = random_ctx(seed, n, d, eps);
        let mut r = rng(seed ^ 0xabc);
        let w = random_weights(&mut r, n, eps);
        let m = random_trace_one(&mut r, d);
        let cert = DualCertificate::explicit(m);
        prop_assert!(cert.hygiene(8, seed).is_ok());
        let dv = dual_objective(&ctx, &cert).unwrap();
        let pv = primal_objective(&ctx, &w).unwrap();
        prop_assert!(dv <= pv + 1e-8, "{} > {}", dv, pv);
    }

    #[test]
    fn converted_dual_has_unit_trace(seed in any::<u64>(), n in 3usize..15, d in 1usize..4, rho in 0.05f64..1.0) {
        let ctx = random_ctx(seed, n, d, 0.1).with_rho(rho).unwrap();
        let inst = build_packing(&ctx).unwrap();
        let mut r = rng(seed);
        let m = random_trace_one(&mut r, d) * r.random_range(0.2..0.9);
        let cov = CoveringSolution::completing(&inst, PsdMatrix::Dense(m));
        if cov.value() <= 1.0 {
            let (cert, bound) = convert_dual(&ctx, &cov).unwrap();
            prop_assert!((cert.matrix.trace() - 1.0).abs() <= 1e-8);
            prop_assert!(bound >= 1.0 / rho * (1.0 - 1e-12));
            prop_assert!(dual_objective(&ctx, &cert).unwrap() >= bound * (1.0 - 1e-9));
        } else {
            let over = matches!(convert_dual(&ctx, &cov), Err(Error::TraceBudgetExceeded(_)));
            prop_assert!(over);
        }
    }

    #[test]
    fn zero_weights_are_feasible(seed in any::<u64>(), n in 1usize..10, d in 1usize..4, rho in 0.01f64..1.0) {
        let inst = build_packing(&random_ctx(seed, n, d, 0.1).with_rho(rho).unwrap()).unwrap();
        prop_assert!(inst.packing_violation(&DVector::zeros(n)).unwrap() <= 0.0);
        prop_assert!(inst.top_block_lambda_max(&DVector::from_element(n, inst.cap())).unwrap() >= 0.0);
    }
}
