mod common;

use hetgibbs_core::design::{
    bisquare_basis, build_design, Column, ColumnScaling, Dataset, Hyperparams, Likelihood, Term,
};
use hetgibbs_core::esvm::{
    build_reservoir, esvm_inputs, esvm_to_gbhm, reservoir_states, spectral_radius, EsvmSpec,
};
use hetgibbs_core::gibbs::{run_gibbs, GibbsConfig};
use hetgibbs_core::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn design_is_a_pure_function(ys in prop::collection::vec(-10.0f64..10.0, 4..20), seed in 0u64..1000) {
        let n = ys.len();
        let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 11) as f64).collect();
        let g: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let ds = Dataset::new("y", ys).unwrap()
            .with_column("x", Column::Numeric(x)).unwrap()
            .with_column("g", Column::Categorical(g)).unwrap();
        let terms = [Term::parse("x").unwrap(), Term::parse("g").unwrap()];
        let build = || build_design(&ds, &terms, &terms[..1], None, None, Likelihood::Gaussian, Hyperparams::default());
        match (build(), build()) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "non-deterministic outcome"),
        }
    }

    #[test]
    fn standardization_inverts(values in prop::collection::vec(-1e3f64..1e3, 2..30)) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        let s = ColumnScaling::fit("x", &values).unwrap();
        for &v in &values {
            let back = s.invert(s.apply(v));
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn far_locations_have_zero_basis_rows(
        centers in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..10),
        r in 0.05f64..0.5,
    ) {
        let c: Vec<[f64; 2]> = centers.iter().map(|&(a, b)| [a, b]).collect();
        let far = [[5.0, 5.0], [-3.0, 0.5]];
        let m = bisquare_basis(&far, &c, &vec![r; c.len()]).unwrap();
        prop_assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reservoir_radius_hits_target(seed in any::<u64>(), n_h in 2usize..40, delta in 0.01f64..1.0) {
        let r = build_reservoir(n_h, 2, seed, 0.1, delta).unwrap();
        prop_assert!((spectral_radius(&r.w).unwrap() - delta).abs() < 1e-10);
        let states = reservoir_states(&r, &DMatrix::from_element(5, 2, 3.0), None).unwrap();
        prop_assert!(states.iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn input_weight_spread_matches_generator() {
    let r = build_reservoir(200, 200, 9, 0.1, 0.1).unwrap();
    let sd = common::variance(r.u.as_slice()).sqrt();
    assert!((sd - 0.1).abs() < 0.005, "{sd}");
}

#[test]
fn echo_states_forget_the_start() {
    let r = build_reservoir(50, 2, 3, 0.1, 0.1).unwrap();
    let x = DMatrix::from_fn(100, 2, |t, j| if j == 0 { 1.0 } else { (t as f64 * 0.3).sin() });
    let a = reservoir_states(&r, &x, None).unwrap();
    let b = reservoir_states(&r, &x, Some(&DVector::from_element(50, 0.5))).unwrap();
    let diff = (a.row(99) - b.row(99)).norm();
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn esvm_fit_is_bit_reproducible() {
    // GARCH(1,1)-like returns from a fixed recursion.
    let mut returns = Vec::new();
    let mut h: f64 = 1.0;
    let mut rng = hetgibbs_core::random::chain_rng(10, 0);
    for _ in 0..120 {
        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let y = h.sqrt() * z;
        returns.push(y);
        h = 0.1 + 0.1 * y * y + 0.85 * h;
    }
    let inputs = esvm_inputs(&returns, None).unwrap();
    let res = build_reservoir(10, inputs.ncols(), 4, 0.1, 0.1).unwrap();
    let es = EsvmSpec::new(res, inputs, 1000.0, EsvmSpec::default_hyper()).unwrap();
    let (spec, _) = esvm_to_gbhm(&es, &returns).unwrap();
    let cfg = GibbsConfig {
        iterations: 200,
        burn_in: 50,
        ..GibbsConfig::default()
    };
    let a = run_gibbs(&spec, &cfg).unwrap();
    let b = run_gibbs(&spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a[0].states.iter().all(|s| 1.0 / s.sigma_eta2 > 7.0));
}
