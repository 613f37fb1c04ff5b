mod common;

use approx::assert_relative_eq;
use ndarray::{array, Array2};
use ssgl_imc::optimizer::update_theta;
use ssgl_imc::ssgl::{g_value, lambda_star, p_star, prox_refined, threshold_upper, MixingWeight};
use ssgl_imc::SsglSide;

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = common::rng(11);
    for case in 0..50 {
        let p = common::small_problem(&mut rng);
        let err = common::gradient_rel_error(&p);
        assert!(err < 1e-5, "instance {case}: relative error {err:e}");
    }
}

#[test]
fn refined_prox_is_never_beaten_by_a_scan() {
    let mut rng = common::rng(12);
    let mut checked = 0;
    for case in 0..200 {
        let c = common::prox_case(&mut rng);
        let res = common::prox_check(&c);
        if res.skipped {
            continue;
        }
        checked += 1;
        assert!(res.gap <= 1e-8, "instance {case} {c:?}: scan beats prox by {:e}", res.gap);
    }
    assert!(checked > 190);
}

fn th(t: f64) -> MixingWeight<f64> {
    MixingWeight::new(t).unwrap()
}

#[test]
fn threshold_hard_branch_by_hand() {
    // g(0) = (13/3 - 1)² + 2e4·ln(1/6) < 0, so Δᵁ = η λ⋆(0) = 1e-4 · 13/3.
    let side = SsglSide::new(5.0, 1.0, 1).unwrap();
    let g0 = g_value(0.0, th(0.5), &side, 1e-4);
    assert_relative_eq!(g0, (10.0f64 / 3.0).powi(2) + 2e4 * (1.0f64 / 6.0).ln(), epsilon = 1e-10);
    assert!(g0 < 0.0);
    assert!((threshold_upper(th(0.5), &side, 1e-4) - 13.0 / 3.0 * 1e-4).abs() < 1e-10);

    let flat = SsglSide::new(1.0, 1.0, 1).unwrap();
    assert!(g_value(0.0, th(0.5), &flat, 1e-4) < 0.0);
    assert!((threshold_upper(th(0.5), &flat, 1e-4) - 1e-4).abs() < 1e-10);
}

#[test]
fn threshold_soft_branch_by_hand() {
    // λ0 = 100, λ1 = 1, θ = 0.5, r = 1, η = 1:
    // p⋆(0) = 1/101, λ⋆(0) = (1 + 100·100)/101 = 10001/101,
    // g(0) = (10001/101 - 1)² + 2 ln(1/101) = (9900/101)² - 2 ln 101 > 0,
    // Δᵁ = √(2 ln 101) + 1.
    let side = SsglSide::new(100.0, 1.0, 1).unwrap();
    assert_relative_eq!(p_star(0.0, th(0.5), &side), 1.0 / 101.0, epsilon = 1e-15);
    assert_relative_eq!(lambda_star(0.0, th(0.5), &side), 10001.0 / 101.0, epsilon = 1e-12);
    let g0 = g_value(0.0, th(0.5), &side, 1.0);
    let want = (9900.0f64 / 101.0).powi(2) - 2.0 * 101f64.ln();
    assert!((g0 - want).abs() < 1e-10 * want, "{g0} vs {want}");
    assert!(g0 > 0.0);
    let delta = threshold_upper(th(0.5), &side, 1.0);
    assert!((delta - ((2.0 * 101f64.ln()).sqrt() + 1.0)).abs() < 1e-10);

    // Same scales with η = 1e-2 in two dimensions:
    // p⋆(0) = 1/(1 + 100²) = 1/10001, λ⋆(0) = (1 + 100·10000)/10001,
    // g(0) = (λ⋆(0) - 1)² + 200 ln(1/10001).
    let side2 = SsglSide::new(100.0, 1.0, 2).unwrap();
    let l0 = 1_000_001.0 / 10_001.0;
    let g2 = (l0 - 1.0f64).powi(2) - 200.0 * 10_001f64.ln();
    assert!(g2 > 0.0);
    assert!((g_value(0.0, th(0.5), &side2, 1e-2) - g2).abs() < 1e-10 * g2);
    let want2 = (2.0 * 1e-2 * 10_001f64.ln()).sqrt() + 1e-2;
    assert!((threshold_upper(th(0.5), &side2, 1e-2) - want2).abs() < 1e-10);
}

#[test]
fn prox_example_by_hand() {
    let side = SsglSide::new(5.0, 1.0, 1).unwrap();
    let side2 = SsglSide::new(5.0, 1.0, 2).unwrap();
    // A previous row of norm 0 gives λ⋆ = 13/3 when r = 1; use r = 2 with a
    // previous row whose λ⋆ is recomputed and compared.
    let out = prox_refined(array![1.0].view(), array![0.0].view(), th(0.5), &side, 1e-4);
    assert!((out[0] - (1.0 - 13.0 / 3.0 * 1e-4)).abs() < 1e-12);
    let prev = array![0.0, 0.0];
    let w = lambda_star(0.0, th(0.5), &side2);
    let out2 = prox_refined(array![1.0, 0.0].view(), prev.view(), th(0.5), &side2, 1e-4);
    assert!((out2[0] - (1.0 - 1e-4 * w)).abs() < 1e-12);
    assert_eq!(out2[1], 0.0);
    let tiny = prox_refined(array![4e-4].view(), array![0.0].view(), th(0.5), &side, 1e-4);
    assert_eq!(tiny[0].to_bits(), 0.0f64.to_bits());
}

#[test]
fn likelihood_equals_replicated_bernoulli() {
    let mut rng = common::rng(13);
    for case in 0..20 {
        let err = common::duplication_error(&mut rng);
        assert!(err <= 1e-12, "instance {case}: {err:e}");
    }
}

#[test]
fn theta_update_by_hand() {
    let mut a = Array2::<f64>::zeros((100, 25));
    for k in 0..25 {
        a[[k, k]] = 1.0;
    }
    assert_eq!(update_theta(&a, 0.04, 1.0), (0.04 + 25.0) / (0.04 + 1.0 + 100.0));
    assert!((update_theta(&a, 0.04, 1.0) - 25.04 / 101.04).abs() < 1e-15);

    let none = Array2::<f64>::zeros((1, 3));
    assert_eq!(update_theta(&none, 1.0, 1.0), 1.0 / 3.0);

    let all = Array2::<f64>::ones((7, 2));
    let t = update_theta(&all, 0.5, 2.0);
    assert_eq!(t, (0.5 + 7.0) / (0.5 + 2.0 + 7.0));
    assert!(t < 1.0);
}

#[test]
fn rank_sum_auc_matches_pairwise_count() {
    let mut rng = common::rng(14);
    for case in 0..100 {
        let (s, l) = common::auc_case(&mut rng);
        let err = common::auc_error(&s, &l);
        assert!(err <= 1e-12, "instance {case}: {err:e}");
    }
}
