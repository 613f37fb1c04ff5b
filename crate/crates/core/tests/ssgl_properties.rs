mod common;

use proptest::prelude::*;
use ssgl_imc::ssgl::{lambda_star, p_star, pen_value, prox_refined, threshold_lower, threshold_upper, MixingWeight};
use ssgl_imc::SsglSide;

fn side_strategy() -> impl Strategy<Value = (f64, f64, usize)> {
    (0.01f64..10.0, 0.0f64..4.0, 1usize..300).prop_map(|(l1, log_ratio, r)| (l1 * 10f64.powf(log_ratio), l1, r))
}

#[test]
fn ten_thousand_random_evaluations() {
    let bad = common::ssgl_invariant_violations(&mut common::rng(21), 10_000);
    assert!(bad.is_empty(), "{} violations, first: {}", bad.len(), bad[0]);
}

proptest! {
    #[test]
    fn lambda_star_is_monotone((l0, l1, r) in side_strategy(), theta in 0.001f64..0.999, x in 0.0f64..50.0, dx in 0.0f64..50.0) {
        let side = SsglSide::new(l0, l1, r).unwrap();
        let th = MixingWeight::new(theta).unwrap();
        prop_assert!(lambda_star(x + dx, th, &side) <= lambda_star(x, th, &side));
    }

    #[test]
    fn prox_output_is_zero_or_shorter_and_collinear(
        (l0, l1, r) in side_strategy(),
        theta in 0.001f64..0.999,
        eta in 1e-6f64..1e-1,
        seed in any::<u64>(),
        scale in -2.0f64..2.0,
    ) {
        let mut rng = common::rng(seed);
        let side = SsglSide::new(l0, l1, r.min(8)).unwrap();
        let th = MixingWeight::new(theta).unwrap();
        let z = common::normal_matrix(&mut rng, 1, side.r(), 10f64.powf(scale)).row(0).to_owned();
        let prev = common::normal_matrix(&mut rng, 1, side.r(), 1.0).row(0).to_owned();
        let out = prox_refined(z.view(), prev.view(), th, &side, eta);
        let zn = z.dot(&z).sqrt();
        let on = out.dot(&out).sqrt();
        if on == 0.0 {
            prop_assert!(out.iter().all(|v| v.to_bits() == 0));
        } else {
            prop_assert!(on < zn);
            prop_assert!(zn > threshold_upper(th, &side, eta));
            let cos = out.dot(&z) / (on * zn);
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }
        if zn <= threshold_upper(th, &side, eta) {
            prop_assert_eq!(on, 0.0);
        }
    }

    #[test]
    fn lower_threshold_stays_below_upper((l0, l1, r) in side_strategy(), theta in 0.001f64..0.999, eta in 1e-8f64..1e-1) {
        let side = SsglSide::new(l0, l1, r).unwrap();
        let th = MixingWeight::new(theta).unwrap();
        if let Some(lo) = threshold_lower(th, &side, eta) {
            prop_assert!(lo <= threshold_upper(th, &side, eta));
        }
    }

    #[test]
    fn degenerate_mixture_is_plain_group_lasso(l in 0.01f64..100.0, r in 1usize..20, theta in 0.001f64..0.999, seed in any::<u64>()) {
        let side = SsglSide::new(l, l, r).unwrap();
        let th = MixingWeight::new(theta).unwrap();
        let x = common::normal_matrix(&mut common::rng(seed), 1, r, 1.0).row(0).to_owned();
        let norm = x.dot(&x).sqrt();
        prop_assert!((p_star(norm, th, &side) - theta).abs() < 1e-12);
        prop_assert!((pen_value(x.view(), th, &side) + l * norm).abs() < 1e-9 * (1.0 + l * norm));
    }
}
