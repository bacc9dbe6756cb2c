use hetgibbs_core::design::{Hyperparams, Likelihood, ModelSpec};
use hetgibbs_core::evaluation::{dic, loglik_pointwise, msev, predict, waic, PointwiseLogLik};
use hetgibbs_core::gibbs::ChainState;
use hetgibbs_core::{DMatrix, DVector};
use proptest::prelude::*;

fn spec(y: &[f64]) -> ModelSpec {
    let n = y.len();
    ModelSpec::new(
        DVector::from_column_slice(y),
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::zeros(n, 0),
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::zeros(n, 0),
        Likelihood::Gaussian,
        Hyperparams::default(),
    )
    .unwrap()
}

fn states(spec: &ModelSpec, draws: &[(f64, f64)]) -> Vec<ChainState> {
    draws
        .iter()
        .map(|&(b1, b2)| {
            let mut s = ChainState::initial(spec);
            s.beta1 = DVector::from_element(1, b1);
            s.beta2 = DVector::from_element(1, b2);
            s
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn draws() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -1.5f64..1.5), 2..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn criteria_ignore_draw_order(y in prop::collection::vec(-3.0f64..3.0, 1..6), d in draws(), k in any::<prop::sample::Index>()) {
        let sp = spec(&y);
        let st = states(&sp, &d);
        let mut rotated = st.clone();
        rotated.rotate_left(k.index(st.len()));
        let (l1, l2) = (loglik_pointwise(&st, &sp).unwrap(), loglik_pointwise(&rotated, &sp).unwrap());
        prop_assert!(close(waic(&l1).unwrap().waic, waic(&l2).unwrap().waic));
        prop_assert!(close(dic(&l1, &st, &sp).unwrap().dic, dic(&l2, &rotated, &sp).unwrap().dic));
    }

    #[test]
    fn duplicating_draws_keeps_dic_and_lppd(y in prop::collection::vec(-3.0f64..3.0, 1..6), d in draws()) {
        let sp = spec(&y);
        let st = states(&sp, &d);
        let doubled: Vec<ChainState> = st.iter().chain(st.iter()).cloned().collect();
        let (l1, l2) = (loglik_pointwise(&st, &sp).unwrap(), loglik_pointwise(&doubled, &sp).unwrap());
        prop_assert!(close(dic(&l1, &st, &sp).unwrap().dic, dic(&l2, &doubled, &sp).unwrap().dic));
        let (w1, w2) = (waic(&l1).unwrap(), waic(&l2).unwrap());
        prop_assert!(close(w1.lppd, w2.lppd));
        // Divisor S − 1: duplication scales the variance term by (2S − 2)/(2S − 1).
        let s = st.len() as f64;
        prop_assert!(close(w2.p_waic, w1.p_waic * (2.0 * s - 2.0) / (2.0 * s - 1.0)));
    }

    #[test]
    fn msev_ignores_joint_permutation(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.01f64..4.0), 1..20),
        k in any::<prop::sample::Index>(),
    ) {
        let mut r2 = rows.clone();
        r2.rotate_left(k.index(rows.len()));
        let split = |r: &[(f64, f64, f64)]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            (r.iter().map(|t| t.0).collect(), r.iter().map(|t| t.1).collect(), r.iter().map(|t| t.2).collect())
        };
        let (a, b, c) = split(&rows);
        let (a2, b2, c2) = split(&r2);
        prop_assert!(close(msev(&a, &b, &c).unwrap(), msev(&a2, &b2, &c2).unwrap()));
    }
}

#[test]
fn variance_prediction_averages_the_exponential() {
    // Skewed draws of β2: the mean of exp(−β2) exceeds exp(−mean β2).
    let sp = spec(&[0.0]);
    let st = states(&sp, &[(0.0, -2.0), (0.0, 0.5), (0.0, 0.6), (0.0, 0.7)]);
    let (_, s2) = predict(&st, &sp).unwrap();
    let plug_in = (-(-2.0 + 0.5 + 0.6 + 0.7) / 4.0f64).exp();
    let averaged = [2.0f64, -0.5, -0.6, -0.7].iter().map(|v| v.exp()).sum::<f64>() / 4.0;
    assert!((s2[0] - averaged).abs() < 1e-12);
    assert!(s2[0] > plug_in * 1.5);
}

#[test]
fn identical_draws_give_zero_penalties() {
    let ll = PointwiseLogLik {
        values: DMatrix::from_element(5, 3, -1.25),
        mode: Likelihood::Gaussian,
    };
    let w = waic(&ll).unwrap();
    assert_eq!(w.p_waic, 0.0);
    assert!((w.waic + 2.0 * w.lppd).abs() < 1e-12);
}
