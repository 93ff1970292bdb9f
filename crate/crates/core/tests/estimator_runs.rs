mod common;

use std::sync::Arc;

use common::rng;
use nalgebra::DVector;
use rand::Rng;
use robust_mean::baseline::empirical_mean;
use robust_mean::contamination::*;
use robust_mean::sdp::{rho_search, RhoOutcome, SdpContext, SearchOptions};
use robust_mean::solver::{reference_primal, SolverConfig};
use robust_mean::*;

const EPS: f64 = 0.1;

fn sub_schedule() -> ConstantSchedule {
    build_constants(EPS, Regime::SubGaussian, &ConstantOverrides::new()).unwrap()
}

fn shift(d: usize, magnitude: f64) -> AdversarySpec {
    let mut dir = vec![0.0; d];
    dir[0] = 1.0;
    AdversarySpec::new(AdversaryKind::ClusterShift { direction: dir, magnitude }, EPS)
}

fn sub_n(sched: &ConstantSchedule, d: usize) -> usize {
    (4.0 * d as f64 / sched.delta().powi(2)).ceil() as usize
}

#[test]
fn clean_gaussian_error_within_radius() {
    let sched = sub_schedule();
    let d = 20;
    let n = sub_n(&sched, d);
    let mut ok = 0;
    for seed in 0..20 {
        let (s, t) = generate(&GeneratorSpec::gaussian(n, d, seed), &AdversarySpec::none()).unwrap();
        let r = estimate_subgaussian(&s, EPS, &sched).unwrap().with_truth(&t);
        assert!(r.iterations <= r.budget);
        ok += (r.error_vs_truth.unwrap() <= sched.c3() * sched.delta()) as usize;
    }
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn cluster_shift_beats_the_mean() {
    let sched = sub_schedule();
    let d = 20;
    let n = sub_n(&sched, d);
    let mut ok = 0;
    for seed in 0..20 {
        let (s, t) = generate(&GeneratorSpec::gaussian(n, d, seed), &shift(d, sched.delta() / EPS)).unwrap();
        let r = estimate_subgaussian(&s, EPS, &sched).unwrap().with_truth(&t);
        let e = r.error_vs_truth.unwrap();
        let naive = t.error(&empirical_mean(&s).unwrap());
        ok += (e <= sched.c3() * sched.delta() && e < naive) as usize;
        if r.terminal_case == TerminalCase::PrimalAccepted {
            assert!(r.verified_primal_objective.unwrap() <= sched.threshold_primal());
        }
    }
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn far_start_contracts_under_dual_steps() {
    let sched = sub_schedule();
    let (d, n) = (2, 200);
    let floor = sched.c2() * sched.beta();
    for seed in 0..20 {
        let (s, t) = generate(&GeneratorSpec::gaussian(n, d, seed), &shift(d, 3.0)).unwrap();
        let s = Arc::new(s);
        let mut r = rng(seed);
        let angle: f64 = r.random::<f64>() * std::f64::consts::TAU;
        let radius = floor * (1.0 + 3.0 * r.random::<f64>());
        let nu = &t.mu_star + DVector::from_vec(vec![angle.cos(), angle.sin()]) * radius;
        let ctx = SdpContext::new(s.clone(), nu.clone(), EPS).unwrap();
        let solver = SolverConfig::new(EPS / 30.0).with_seed(seed);
        let res = rho_search(&ctx, &sched, &solver, &SearchOptions::default()).unwrap();
        let RhoOutcome::GoodDual { certificate, .. } = res.outcome else {
            panic!("seed {seed}: expected a dual outcome at r = {radius}");
        };
        let state = GuessState { nu: nu.clone(), r_hat: 0.0, iteration: 0 };
        let up = update_guess(&state, &certificate, &ctx.with_rho(res.rho).unwrap(), &sched, &solver).unwrap();
        assert!((up.v1.norm() - 1.0).abs() < 1e-8);
        let expected = &nu + &up.v1 * (up.chosen_sign as f64 * up.r_prime);
        assert!((&expected - &up.nu_next).norm() <= 1e-12 * expected.norm());
        let after = t.error(&up.nu_next);
        assert!(after <= 0.75 * radius, "seed {seed}: {after} vs {radius}");

        // The kept candidate has the larger covering value and sits closer to the truth.
        let rejected = &nu - &up.v1 * (up.chosen_sign as f64 * up.r_prime);
        let (chosen, other) = if up.chosen_sign > 0 { (up.plus_value, up.minus_value) } else { (up.minus_value, up.plus_value) };
        assert!(chosen > other);
        assert!(t.error(&rejected) > after);
    }
}

#[test]
fn chosen_sign_has_the_smaller_optimum() {
    // Small enough for the exact oracle on both candidates.
    let sched = sub_schedule();
    let (d, n) = (2, 60);
    for seed in 0..10 {
        let (s, t) = generate(&GeneratorSpec::gaussian(n, d, 100 + seed), &AdversarySpec::none()).unwrap();
        let s = Arc::new(s);
        let nu = &t.mu_star + DVector::from_vec(vec![0.6, -0.8]) * (2.0 * sched.c2() * sched.beta());
        let ctx = SdpContext::new(s.clone(), nu.clone(), EPS).unwrap();
        let solver = SolverConfig::new(EPS / 30.0).with_seed(seed);
        let res = rho_search(&ctx, &sched, &solver, &SearchOptions::default()).unwrap();
        let RhoOutcome::GoodDual { certificate, .. } = res.outcome else {
            panic!("seed {seed}: expected a dual outcome");
        };
        let state = GuessState { nu: nu.clone(), r_hat: 0.0, iteration: 0 };
        let up = update_guess(&state, &certificate, &ctx.with_rho(res.rho).unwrap(), &sched, &solver).unwrap();
        let rejected = &nu - &up.v1 * (up.chosen_sign as f64 * up.r_prime);
        let at = |p: &DVector<f64>| reference_primal(&ctx.with_nu(p.clone()).unwrap()).unwrap().opt();
        assert!(at(&up.nu_next) < at(&rejected), "seed {seed}");
    }
}

#[test]
fn bounded_clean_error_and_scale() {
    let sched = build_constants(EPS, Regime::BoundedCovariance, &ConstantOverrides::new()).unwrap();
    let d = 20;
    let n = (4.0 * d as f64 / sched.delta().powi(2)).ceil() as usize;
    let bound = sched.c3() * sched.c1() * EPS.sqrt();
    let mut ok = 0;
    for seed in 0..20 {
        let (s, t) = generate(&GeneratorSpec::bounded(2 * n, d, 1.0, seed), &AdversarySpec::none()).unwrap();
        let r1 = estimate_bounded_cov(&s, EPS, 1.0, &sched).unwrap().with_truth(&t);
        ok += (r1.error_vs_truth.unwrap() <= bound) as usize;
        if seed < 3 {
            for sigma in [4.0, 5.0] {
                let scaled = s.affine(sigma, &DVector::zeros(d)).unwrap();
                let r = estimate_bounded_cov(&scaled, EPS, sigma, &sched).unwrap();
                // The rescaling is exact on the data the estimator actually sees.
                let back = SampleSet::new(scaled.data() / sigma).unwrap();
                let rb = estimate_bounded_cov(&back, EPS, 1.0, &sched).unwrap();
                assert_eq!(r.mu_hat, &rb.mu_hat * sigma);
                let diff = (&r.mu_hat - &r1.mu_hat * sigma).amax();
                if sigma == 4.0 {
                    assert_eq!(diff, 0.0);
                } else {
                    // Rounding in σ·X can flip a threshold decision; the drift stays
                    // at the solver tolerance.
                    assert!(diff <= sigma * sched.delta() * EPS / 30.0, "seed {seed}: {diff}");
                }
            }
        }
    }
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn far_points_are_pruned_before_the_loop() {
    let sched = build_constants(EPS, Regime::BoundedCovariance, &ConstantOverrides::new()).unwrap();
    let (n, d) = (200, 10);
    let adv = AdversarySpec::new(AdversaryKind::FarPoints { radius: 1e3 }, EPS);
    let (s, _) = generate(&GeneratorSpec::bounded(2 * n, d, 1.0, 4), &adv).unwrap();
    let r = estimate_bounded_cov(&s, EPS, 1.0, &sched).unwrap();
    // The planted points land in both halves; those in the second are replaced.
    let (_, second) = s.split_halves().unwrap();
    let planted = (0..second.n()).filter(|&i| second.row(i).norm() > 500.0).count();
    assert!(planted > 0);
    assert!(r.pruned_count.unwrap() >= planted);
}

#[test]
fn translation_equivariance() {
    let sched = sub_schedule();
    let (n, d) = (120, 6);
    for seed in 0..4 {
        let (s, _) = generate(&GeneratorSpec::gaussian(n, d, seed), &shift(d, 4.0)).unwrap();
        let c = DVector::from_fn(d, |i, _| 10.0 * (i as f64 - 2.5));
        let a = estimate_subgaussian(&s, EPS, &sched).unwrap();
        let b = estimate_subgaussian(&s.affine(1.0, &c).unwrap(), EPS, &sched).unwrap();
        assert!((&b.mu_hat - &a.mu_hat - &c).amax() <= 1e-8, "seed {seed}");
        assert_eq!(a.terminal_case, b.terminal_case);
    }
    let bsched = build_constants(EPS, Regime::BoundedCovariance, &ConstantOverrides::new()).unwrap();
    let (s, _) = generate(&GeneratorSpec::bounded(240, d, 1.0, 9), &AdversarySpec::none()).unwrap();
    let c = DVector::from_element(d, -7.5);
    let a = estimate_bounded_cov(&s, EPS, 1.0, &bsched).unwrap();
    let b = estimate_bounded_cov(&s.affine(1.0, &c).unwrap(), EPS, 1.0, &bsched).unwrap();
    assert!((&b.mu_hat - &a.mu_hat - &c).amax() <= 1e-8);
}

#[test]
fn identical_points_come_back_exactly() {
    let p = vec![0.3, -1.7, 2.25, 1e3];
    let s = SampleSet::from_rows(&vec![p.clone(); 25]).unwrap();
    for eps in [0.01, 0.1, 0.3] {
        let sched = build_constants(eps, Regime::SubGaussian, &ConstantOverrides::new()).unwrap();
        let r = estimate_subgaussian(&s, eps, &sched).unwrap();
        assert_eq!(r.mu_hat.as_slice(), p.as_slice());
        assert_eq!(r.terminal_case, TerminalCase::PrimalAccepted);
        assert_eq!(r.iterations, 1);
    }
}

#[test]
fn budget_grows_like_log_d() {
    let sched = sub_schedule();
    let b: Vec<usize> = [10usize, 100, 1000, 10_000].iter().map(|&d| sched.iteration_budget(d, 3.0)).collect();
    // Each factor of 10 in d adds log_{4/3}(√10) ≈ 4 iterations.
    for w in b.windows(2) {
        assert!(w[1] >= w[0] && w[1] - w[0] <= 5);
    }
}
