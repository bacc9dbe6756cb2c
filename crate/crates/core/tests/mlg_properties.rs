use hetgibbs_core::mlg::{cmlg_sample, cmlg_sample_truncated, mlg_sample, CmlgParams, MlgParams};
use hetgibbs_core::random::chain_rng;
use hetgibbs_core::{DMatrix, DVector};
use proptest::prelude::*;

fn positive() -> impl Strategy<Value = f64> {
    0.1f64..20.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_scale_density_factorizes(
        y in prop::collection::vec(-5.0f64..5.0, 3),
        a in prop::collection::vec(positive(), 3),
        k in prop::collection::vec(positive(), 3),
    ) {
        let joint = MlgParams::standard(DVector::from_vec(a.clone()), DVector::from_vec(k.clone())).unwrap();
        let total = joint.log_density(&DVector::from_vec(y.clone())).unwrap();
        let parts: f64 = (0..3)
            .map(|i| {
                MlgParams::standard(DVector::from_element(1, a[i]), DVector::from_element(1, k[i]))
                    .unwrap()
                    .log_density(&DVector::from_element(1, y[i]))
                    .unwrap()
            })
            .sum();
        prop_assert!((total - parts).abs() <= 1e-9 * (1.0 + total.abs()));
    }

    #[test]
    fn truncated_draws_exceed_bound(
        a in positive(),
        k in positive(),
        h in 0.2f64..3.0,
        lower in -3.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let c = CmlgParams::new(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, a),
            DVector::from_element(1, k),
        ).unwrap();
        let mut rng = chain_rng(seed, 0);
        for _ in 0..20 {
            match cmlg_sample_truncated(&mut rng, &c, lower, 100_000) {
                Ok(x) => prop_assert!(x > lower),
                Err(e) => {
                    let expected = matches!(e, hetgibbs_core::Error::TruncationFailure { .. });
                    prop_assert!(expected, "unexpected error {}", e);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed(seed in any::<u64>(), a in positive(), k in positive()) {
        let p = MlgParams::standard(DVector::from_element(2, a), DVector::from_element(2, k)).unwrap();
        prop_assert_eq!(mlg_sample(&mut chain_rng(seed, 3), &p), mlg_sample(&mut chain_rng(seed, 3), &p));
        let c = CmlgParams::new(DMatrix::from_element(3, 1, 1.0), DVector::from_element(3, a), DVector::from_element(3, k)).unwrap();
        prop_assert_eq!(cmlg_sample(&mut chain_rng(seed, 4), &c), cmlg_sample(&mut chain_rng(seed, 4), &c));
    }

    #[test]
    fn draws_are_finite(a in 0.05f64..1e4, k in 1e-3f64..1e4, seed in any::<u64>()) {
        let p = MlgParams::standard(DVector::from_element(1, a), DVector::from_element(1, k)).unwrap();
        let y = mlg_sample(&mut chain_rng(seed, 0), &p);
        prop_assert!(y[0].is_finite());
    }
}
