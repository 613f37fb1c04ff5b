mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use ssgl_imc::evaluation::auc;
use ssgl_imc::optimizer::{log_likelihood, log_posterior, Problem};
use ssgl_imc::{HyperParams, LatentFactors, SideFeatures};

/// Plain Bernoulli log-likelihood written cell by cell.
fn bernoulli(m: &Array2<f64>, y: &Array2<u8>) -> f64 {
    m.iter()
        .zip(y.iter())
        .map(|(&m, &y)| {
            // log σ(m) and log(1 - σ(m))
            if y == 1 {
                -(-m).exp().ln_1p()
            } else {
                -m.exp().ln_1p()
            }
        })
        .sum()
}

#[test]
fn xi_one_is_the_bernoulli_likelihood() {
    let mut rng = common::rng(31);
    for _ in 0..50 {
        let (i, j) = (rng.random_range(1..8), rng.random_range(1..8));
        let y = common::random_labels(&mut rng, i, j, 0.3);
        let m = common::normal_matrix(&mut rng, i, j, 1.5);
        let got = log_likelihood(&m, &y, 1.0);
        let want = bernoulli(&m, y.labels());
        assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn xi_one_log_posterior_is_bernoulli_plus_penalty() {
    let mut rng = common::rng(32);
    for _ in 0..20 {
        let p = common::small_problem(&mut rng);
        let problem = Problem::new(&p.y, &p.u, &p.v).unwrap();
        let r = p.a.ncols();
        let hyper = HyperParams {
            xi: 1.0,
            r,
            ..HyperParams::default()
        };
        let factors = LatentFactors::new(p.a.clone(), p.b.clone()).unwrap();
        let theta_a = vec![0.5; p.a.nrows()];
        let theta_b = vec![0.5; p.b.nrows()];
        let weighted = log_posterior(&problem, &factors, &hyper, &theta_a, &theta_b).unwrap();
        let hyper10 = HyperParams { xi: 10.0, ..hyper.clone() };
        let with_xi = log_posterior(&problem, &factors, &hyper10, &theta_a, &theta_b).unwrap();
        let m = ssgl_imc::optimizer::compute_m(&p.u, &p.a, &p.b, &p.v).unwrap();
        let penalty = weighted - log_likelihood(&m, &p.y, 1.0);
        let plain = bernoulli(&m, p.y.labels()) + penalty;
        assert!((weighted - plain).abs() <= 1e-12 * (1.0 + plain.abs()), "{weighted} vs {plain}");
        if p.y.n_positives() > 0 {
            assert!(with_xi != weighted);
        }
    }
}

#[test]
fn log_likelihood_is_finite_for_saturated_logits() {
    let y = ssgl_imc::InteractionMatrix::from_dense(ndarray::array![[1u8, 0], [0, 1]]).unwrap();
    let m: Array2<f64> = ndarray::array![[800.0, -800.0], [800.0, -800.0]];
    let ll = log_likelihood(&m, &y, 10.0);
    assert!(ll.is_finite());
    assert!((ll - (-800.0 - 10.0 * 800.0)).abs() < 1e-9);
}

#[test]
fn log_likelihood_is_generic_over_precision() {
    let mut rng = common::rng(33);
    let y = common::random_labels(&mut rng, 5, 4, 0.4);
    let m = common::normal_matrix(&mut rng, 5, 4, 1.0);
    let m32 = m.mapv(|v| v as f32);
    let l64 = log_likelihood(&m, &y, 10.0);
    let l32 = log_likelihood(&m32, &y, 10.0f32) as f64;
    assert!((l64 - l32).abs() < 1e-4 * l64.abs());
    let u = SideFeatures::new(Array2::<f32>::eye(5), None).unwrap();
    assert_eq!(u.n_features(), 5);
}

proptest! {
    #[test]
    fn auc_is_invariant_under_increasing_maps(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (s, l) = common::auc_case(&mut rng);
        let base = auc(&s, &l).unwrap();
        let mapped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 2.0).collect();
        prop_assert!((auc(&mapped, &l).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn negated_scores_complement_without_ties(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = common::rng(seed);
        let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut l: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        l[0] = 1;
        l[n - 1] = 0;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auc(&s, &l).unwrap() + auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replicated_positives_match_weighting(seed in any::<u64>()) {
        let err = common::duplication_error(&mut common::rng(seed));
        prop_assert!(err <= 1e-12);
    }
}
