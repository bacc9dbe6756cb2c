mod common;

use common::{ks_pvalue, ks_statistic, mean, variance};
use hetgibbs_core::mlg::{
    cmlg_sample, cmlg_sample_truncated_counted, log_gamma_sample, mlg_gaussian_limit_params,
    mlg_sample, CmlgParams, MlgParams, DEFAULT_MAX_ATTEMPTS,
};
use hetgibbs_core::random::chain_rng;
use hetgibbs_core::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

// ψ(1) and ψ′(1) = π²/6.
const DIGAMMA_1: f64 = -0.577_215_664_901_532_9;
const TRIGAMMA_1: f64 = 1.644_934_066_848_226_4;

#[test]
fn log_gamma_moments_match_digamma_and_trigamma() {
    let mut rng = chain_rng(1, 0);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| log_gamma_sample(&mut rng, 1.0, 1.0).unwrap())
        .collect();
    assert!((mean(&xs) - DIGAMMA_1).abs() < 0.005, "{}", mean(&xs));
    assert!((variance(&xs) - TRIGAMMA_1).abs() < 0.02, "{}", variance(&xs));
}

#[test]
fn exp_of_log_gamma_is_gamma() {
    for &(shape, rate) in &[(0.5, 1.0), (1.0, 1.0), (4.0, 2.5)] {
        let mut rng = chain_rng(2, 0);
        let g = Gamma::new(shape, rate).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| log_gamma_sample(&mut rng, shape, rate).unwrap().exp())
            .collect();
        let p = ks_pvalue(ks_statistic(&xs, |x| g.cdf(x)), xs.len());
        assert!(p > 0.01, "shape {shape}: p = {p}");
    }
}

#[test]
fn shifted_mlg_mean_uses_digamma_identity() {
    // 5 + ψ(2) − log 2 with ψ(2) = 1 − γ.
    let want = 5.0 + (1.0 + DIGAMMA_1) - 2.0f64.ln();
    assert!((want - 4.729637).abs() < 1e-6);
    let p = MlgParams::new(
        DVector::from_element(2, 5.0),
        DMatrix::identity(2, 2),
        DVector::from_element(2, 2.0),
        DVector::from_element(2, 2.0),
    )
    .unwrap();
    let mut rng = chain_rng(3, 0);
    let mut sums = [0.0; 2];
    let n = 1_000_000;
    for _ in 0..n {
        let y = mlg_sample(&mut rng, &p);
        sums[0] += y[0];
        sums[1] += y[1];
    }
    for s in sums {
        assert!((s / n as f64 - want).abs() < 0.005, "{}", s / n as f64);
    }
}

#[test]
fn affine_transform_moments() {
    let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 1.5]);
    let mu = DVector::from_row_slice(&[1.0, -2.0]);
    let alpha = DVector::from_row_slice(&[1.5, 3.0]);
    let kappa = DVector::from_row_slice(&[2.0, 0.5]);
    let p = MlgParams::new(mu.clone(), v.clone(), alpha.clone(), kappa.clone()).unwrap();
    let z = MlgParams::standard(alpha, kappa).unwrap();
    let n = 200_000;
    let mut r1 = chain_rng(4, 0);
    let mut r2 = chain_rng(4, 1);
    let direct: Vec<DVector<f64>> = (0..n).map(|_| mlg_sample(&mut r1, &p)).collect();
    let mapped: Vec<DVector<f64>> = (0..n).map(|_| &v * mlg_sample(&mut r2, &z) + &mu).collect();
    for k in 0..2 {
        let a: Vec<f64> = direct.iter().map(|y| y[k]).collect();
        let b: Vec<f64> = mapped.iter().map(|y| y[k]).collect();
        let se_m = ((variance(&a) + variance(&b)) / n as f64).sqrt();
        assert!((mean(&a) - mean(&b)).abs() < 3.0 * se_m);
        // Squared deviations: compare second moments with their own spread.
        let (ma, mb) = (mean(&a), mean(&b));
        let sa: Vec<f64> = a.iter().map(|x| (x - ma).powi(2)).collect();
        let sb: Vec<f64> = b.iter().map(|x| (x - mb).powi(2)).collect();
        let se_v = ((variance(&sa) + variance(&sb)) / n as f64).sqrt();
        assert!((mean(&sa) - mean(&sb)).abs() < 3.0 * se_v);
    }
}

#[test]
fn two_row_projection_is_average_of_log_gammas() {
    let c = CmlgParams::new(
        DMatrix::from_element(2, 1, 1.0),
        DVector::from_element(2, 1.0),
        DVector::from_element(2, 1.0),
    )
    .unwrap();
    let mut rng = chain_rng(5, 0);
    let xs: Vec<f64> = (0..1_000_000).map(|_| cmlg_sample(&mut rng, &c)[0]).collect();
    assert!((mean(&xs) - DIGAMMA_1).abs() < 0.01);
    // Variance of the average of two: ψ′(1)/2.
    assert!((variance(&xs) - TRIGAMMA_1 / 2.0).abs() < 0.01);
}

#[test]
fn truncation_acceptance_is_exp_minus_one() {
    let c = CmlgParams::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let mut rng = chain_rng(6, 0);
    let mut attempts = 0;
    let draws = 100_000;
    for _ in 0..draws {
        let (x, a) = cmlg_sample_truncated_counted(&mut rng, &c, 0.0, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert!(x > 0.0);
        attempts += a;
    }
    let rate = draws as f64 / attempts as f64;
    assert!((rate - (-1.0f64).exp()).abs() < 0.01, "{rate}");
}

#[test]
fn gaussian_limit_at_ten_thousand() {
    let p = mlg_gaussian_limit_params(DVector::zeros(1), DMatrix::identity(1, 1), 1e4).unwrap();
    let mut rng = chain_rng(7, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| mlg_sample(&mut rng, &p)[0]).collect();
    let n = Normal::new(0.0, 1.0).unwrap();
    let pv = ks_pvalue(ks_statistic(&xs, |x| n.cdf(x)), xs.len());
    assert!(pv > 0.01, "{pv}");
}

#[test]
fn gaussian_limit_covariance_two_by_two() {
    let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
    let target = &l * l.transpose();
    let p = mlg_gaussian_limit_params(DVector::zeros(2), l, 1e4).unwrap();
    let mut rng = chain_rng(8, 0);
    let n = 200_000;
    let ys: Vec<DVector<f64>> = (0..n).map(|_| mlg_sample(&mut rng, &p)).collect();
    let m = ys.iter().fold(DVector::zeros(2), |a, y| a + y) / n as f64;
    let cov = ys
        .iter()
        .fold(DMatrix::zeros(2, 2), |a, y| a + (y - &m) * (y - &m).transpose())
        / (n as f64 - 1.0);
    for (got, want) in cov.iter().zip(target.iter()) {
        assert!((got - want).abs() < 0.05 * want.abs().max(0.6), "{got} vs {want}");
    }
}

#[test]
fn unit_shape_limit_is_plain_mlg() {
    let p = mlg_gaussian_limit_params(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 2.0), 1.0)
        .unwrap();
    let q = MlgParams::new(
        DVector::from_element(1, 0.3),
        DMatrix::from_element(1, 1, 2.0),
        DVector::from_element(1, 1.0),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    assert_eq!((p.mu(), p.v(), p.alpha(), p.kappa()), (q.mu(), q.v(), q.alpha(), q.kappa()));
}
