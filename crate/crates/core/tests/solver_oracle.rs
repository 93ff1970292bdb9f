mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use robust_mean::linalg::{sym_eigen_desc, sym_expm, weighted_gram};
use robust_mean::sdp::*;
use robust_mean::solver::*;
use robust_mean::SampleSet;

fn grid_ctx(seed: u64, n: usize, d: usize, eps: f64, rho: f64) -> SdpContext {
    random_ctx(seed, n, d, eps).with_rho(rho).unwrap()
}

#[test]
fn zero_top_block_closed_form() {
    for eps in [0.0, 0.1, 0.25] {
        let s = Arc::new(SampleSet::from_rows(&vec![vec![2.0, 1.0]; 9]).unwrap());
        let ctx = SdpContext::new(s, DVector::from_vec(vec![2.0, 1.0]), eps).unwrap().with_rho(0.5).unwrap();
        let inst = build_packing(&ctx).unwrap();
        let tol = 0.01;
        let out = solve_positive(&inst, tol, 1000).unwrap();
        assert!(out.verified);
        assert!(out.packing_value >= (1.0 - tol) / (1.0 - eps));
    }
}

#[test]
fn single_sample_closed_form() {
    // X₁ − ν = 1, ρ = 1, ε = 0: caps w₁ ≤ 1 and w₁ ≤ 1/N with N = 1.
    let s = Arc::new(SampleSet::from_rows(&[vec![1.0]]).unwrap());
    let ctx = SdpContext::new(s, DVector::zeros(1), 0.0).unwrap().with_rho(1.0).unwrap();
    let inst = build_packing(&ctx).unwrap();
    let re = reference_solve(&inst).unwrap();
    assert!((re.opt() - 1.0).abs() < 1e-6);
    let out = solve_positive(&inst, 0.01, 2000).unwrap();
    assert!(out.packing_value >= 0.99 && out.covering_value <= 1.01);
}

#[test]
fn random_small_instance_brackets_oracle() {
    let inst = build_packing(&grid_ctx(11, 8, 3, 0.1, 0.4)).unwrap();
    let tol = 0.01;
    let opt = reference_solve(&inst).unwrap().opt();
    let out = solve_positive(&inst, tol, 20_000).unwrap();
    assert!(out.packing_value >= (1.0 - tol) * opt);
    assert!(out.covering_value <= (1.0 + tol) * opt);
}

#[test]
fn oracle_grid_agreement() {
    let (mut total, mut good) = (0, 0);
    for n in [8, 16] {
        for d in [2, 4] {
            for rho in [0.1, 0.3, 1.0] {
                for eps in [0.1, 0.2] {
                    for seed in 0..5 {
                        let inst = build_packing(&grid_ctx(seed, n, d, eps, rho)).unwrap();
                        let tol = eps / 30.0;
                        let out = solve_positive(&inst, tol, 20_000).unwrap();
                        assert!(out.verified);
                        assert!(out.packing_value <= out.covering_value * (1.0 + 1e-9));
                        let opt = reference_solve(&inst).unwrap().opt();
                        total += 1;
                        good += (out.packing_value >= (1.0 - tol) * opt && out.covering_value <= (1.0 + tol) * opt) as usize;
                    }
                }
            }
        }
    }
    assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
}

#[test]
fn reference_duality_gap() {
    for seed in 0..10 {
        let ctx = random_ctx(seed, 20, 3, 0.1);
        let p = reference_primal(&ctx).unwrap();
        assert!(p.gap() <= 1e-5, "gap {}", p.gap());
        assert!(p.w.in_polytope(0.1));
        let inst = build_packing(&ctx.with_rho(0.3).unwrap()).unwrap();
        let r = reference_solve(&inst).unwrap();
        assert!(r.covering_value - r.packing_value <= 1e-5);
    }
}

#[test]
fn reference_size_limit() {
    let ctx = random_ctx(0, REFERENCE_MAX_N + 1, 2, 0.1);
    assert!(reference_primal(&ctx).is_err());
}

#[test]
fn reference_matches_greedy_in_one_dimension() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let xs: Vec<f64> = (0..15).map(|_| r.random::<f64>() * 6.0 - 3.0).collect();
        let s = Arc::new(SampleSet::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap());
        let ctx = SdpContext::new(s, DVector::from_element(1, 0.4), 0.2).unwrap();
        let greedy = greedy_primal_1d(&xs, 0.4, 0.2);
        assert!((reference_primal(&ctx).unwrap().opt() - greedy).abs() <= 1e-6 * greedy.max(1.0));
    }
}

#[test]
fn top_eigenvector_examples() {
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
    let (v, l) = top_eigenvector(&diag, 0.01, 0).unwrap();
    assert!(v[0].abs() > 0.99 && l >= 2.97);

    for seed in 0..20 {
        let mut r = rng(seed);
        let g = gaussian_matrix(&mut r, 6, 6, 1.0);
        let a = &g * g.transpose();
        let (vals, vecs) = sym_eigen_desc(&a);
        if vals[1] > 0.9 * vals[0] {
            continue;
        }
        let (v, l) = top_eigenvector(&a, 0.01, seed).unwrap();
        assert!(v.dot(&vecs.column(0)).abs() >= 0.99, "seed {seed}");
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let rq = v.dot(&(&a * &v));
        assert!((rq - l).abs() <= 1e-10 * l.abs());
    }
}

fn blocks(v: &DMatrix<f64>, rho: f64, seed: u64) -> Vec<ImplicitBlock> {
    let mut r = rng(seed);
    (0..3)
        .map(|_| {
            let x = DVector::from_fn(v.nrows(), |_, _| r.random::<f64>() * 0.3);
            let psi = weighted_gram(v, &x) * rho;
            let lam = sym_eigen_desc(&psi).0[0];
            let e = sym_expm(&(psi - DMatrix::identity(v.ncols(), v.ncols()) * lam));
            ImplicitBlock { x, shift: lam, normalizer: e.trace() + 0.5, top_trace: e.trace(), lambda_max: lam }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn implicit_operator_contracts(seed in any::<u64>(), n in 4usize..20, d in 2usize..7, rho in 0.1f64..1.0) {
        let mut r = rng(seed);
        let v = Arc::new(gaussian_matrix(&mut r, n, d, 1.0));
        let b = blocks(&v, rho, seed);
        let tol = 1e-9;
        let lazy = ImplicitPsdOperator::with_dense_threshold(v.clone(), rho, b.clone(), 0.7, tol, 0);
        let dense = ImplicitPsdOperator::new(v, rho, b, 0.7, tol).materialize();
        for _ in 0..4 {
            let u = gaussian_matrix(&mut r, d, 1, 1.0).column(0).into_owned();
            let w = gaussian_matrix(&mut r, d, 1, 1.0).column(0).into_owned();
            let (lu, lw) = (lazy.apply(&u), lazy.apply(&w));
            let (a, c) = (w.dot(&lu), u.dot(&lw));
            prop_assert!((a - c).abs() <= 1e-8 * a.abs().max(c.abs()).max(1.0));
            prop_assert!(u.dot(&lu) >= -1e-8 * u.norm_squared());
            let exact = &dense * &u;
            prop_assert!((lu - &exact).norm() <= 10.0 * tol * exact.norm().max(1.0));
        }
    }

    #[test]
    fn monotone_in_rho(seed in 0u64..1000, r1 in 0.05f64..0.5, k in 1.1f64..2.0) {
        let base = random_ctx(seed, 12, 2, 0.1);
        let r2 = (r1 * k).min(1.0);
        let o1 = reference_solve(&build_packing(&base.with_rho(r1).unwrap()).unwrap()).unwrap().opt();
        let o2 = reference_solve(&build_packing(&base.with_rho(r2).unwrap()).unwrap()).unwrap().opt();
        prop_assert!(o2 <= o1 * (1.0 + 1e-6));
        prop_assert!(o2 >= r1 / r2 * o1 * (1.0 - 1e-6));
    }

    #[test]
    fn verified_outcomes_are_feasible(seed in any::<u64>(), n in 3usize..24, d in 1usize..5, rho in 0.05f64..1.0) {
        let inst = build_packing(&grid_ctx(seed, n, d, 0.1, rho)).unwrap();
        let out = solve_positive(&inst, 0.01, 20_000).unwrap();
        prop_assert!(out.verified);
        prop_assert!(inst.packing_violation(&out.w_prime).unwrap() <= FEAS_TOL);
        prop_assert!(inst.covering_slack(&out.covering).unwrap() >= -FEAS_TOL);
        prop_assert!(out.packing_value <= out.covering_value * (1.0 + 1e-9));
    }
}

#[test]
fn fixed_point_at_inverse_opt() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let x = gaussian_matrix(&mut r, 24, 3, 1.0);
        let ctx = SdpContext::new(Arc::new(SampleSet::new(x).unwrap()), DVector::from_element(3, 0.7), 0.1).unwrap();
        let opt = reference_primal(&ctx).unwrap().opt();
        let star = 1.0 / opt;
        let fp = reference_solve(&build_packing(&ctx.with_rho(star).unwrap()).unwrap()).unwrap().opt();
        assert!((fp - 1.0).abs() <= 0.01, "seed {seed}: {fp}");
    }
}

