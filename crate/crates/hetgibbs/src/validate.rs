//! Validation suites, one per acceptance criterion.
//!
//! Each suite returns a [`SuiteReport`] of named checks. A check is either
//! asserted (it decides the suite outcome) or recorded (published for
//! inspection only, e.g. projection discrepancies for non-square `H`).

use std::time::Instant;

use hetgibbs_core::design::{bisquare_basis, Hyperparams, Likelihood, ModelSpec};
use hetgibbs_core::esvm::{build_reservoir, esvm_inputs, esvm_to_gbhm, spectral_radius, EsvmSpec};
use hetgibbs_core::evaluation::{
    dic, effective_size, log_density, loglik_pointwise, msev, waic, CvScheme, PointwiseLogLik,
};
use hetgibbs_core::gibbs::{run_chain, Block, ChainState, FaultInjection, GibbsConfig, NoClock};
use hetgibbs_core::mlg::{
    cmlg_sample, cmlg_sample_truncated_counted, mlg_gaussian_limit_params, mlg_sample, CmlgParams,
    MlgParams, DEFAULT_MAX_ATTEMPTS,
};
use hetgibbs_core::random::{chain_rng, inverse_gaussian};
use hetgibbs_core::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};
use crate::oracle::{
    generate_synthetic, grid_normalize, inverse_gaussian_by_completing_square,
    inverse_gaussian_logpdf, ks_test, laplace_mixture_check, sbc_run, GridOracle, SbcConfig,
    SyntheticShape,
};
use crate::run::{par_map, run_chains, run_cv};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
    /// Recorded checks are published but do not decide the outcome.
    pub asserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub criterion: u8,
    pub suite: String,
    pub seed: u64,
    pub elapsed_seconds: f64,
    pub runtime_limit_seconds: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.asserted)
    }

    /// Asserted checks that failed.
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.asserted && !c.passed).collect()
    }

    /// One-line outcome, e.g. for test logs.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let detail: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let mark = match (c.asserted, c.passed) {
                    (false, _) => "rec",
                    (true, true) => "ok",
                    (true, false) => "FAIL",
                };
                format!("{}={:.6} ({} {})", c.name, c.value, c.bound, mark)
            })
            .collect();
        format!(
            "criterion {:>2} [{}] {} in {:.1}s: {}",
            self.criterion,
            self.suite,
            status,
            self.elapsed_seconds,
            detail.join("; ")
        )
    }
}

struct Recorder {
    checks: Vec<Check>,
}

impl Recorder {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn below(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.push(name, value, format!("< {bound:e}"), value < bound, true);
    }

    fn above(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.push(name, value, format!("> {bound:e}"), value > bound, true);
    }

    fn flag(&mut self, name: impl Into<String>, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 }, "= 1".into(), ok, true);
    }

    fn record(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, value, "recorded".into(), true, false);
    }

    fn push(&mut self, name: impl Into<String>, value: f64, bound: String, passed: bool, asserted: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            bound,
            passed: passed && !value.is_nan(),
            asserted,
        });
    }
}

/// Suite names in criterion order.
pub const SUITES: [&str; 10] = [
    "mlg-law",
    "gaussian-limit",
    "cmlg-grid",
    "sbc",
    "constant-variance",
    "laplace",
    "recovery",
    "esvm",
    "metrics",
    "performance",
];

const LIMITS: [f64; 10] = [30.0, 60.0, 120.0, 1800.0, 120.0, 60.0, 1200.0, 600.0, 1.0, 600.0];

/// Runs one suite by name.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let idx = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::Config(format!("unknown suite `{name}`; known: {}", SUITES.join(", "))))?;
    let start = Instant::now();
    let mut rec = Recorder::new();
    match idx {
        0 => mlg_law(&mut rec, seed)?,
        1 => gaussian_limit(&mut rec, seed)?,
        2 => cmlg_grid(&mut rec, seed)?,
        3 => sbc(&mut rec, seed)?,
        4 => constant_variance(&mut rec, seed)?,
        5 => laplace(&mut rec, seed)?,
        6 => recovery(&mut rec, seed)?,
        7 => esvm(&mut rec, seed)?,
        8 => metrics(&mut rec)?,
        _ => performance(&mut rec, seed)?,
    }
    let elapsed = start.elapsed().as_secs_f64();
    rec.below("runtime_seconds", elapsed, LIMITS[idx]);
    Ok(SuiteReport {
        criterion: idx as u8 + 1,
        suite: name.to_string(),
        seed,
        elapsed_seconds: elapsed,
        runtime_limit_seconds: LIMITS[idx],
        checks: rec.checks,
    })
}

/// Grid range holding all but a `e^{-30}` relative sliver of the density.
fn auto_range(logk: &dyn Fn(f64) -> f64) -> Result<(f64, f64)> {
    let step = 0.01;
    let xs: Vec<f64> = (0..=80_000).map(|i| -400.0 + step * i as f64).collect();
    let ls: Vec<f64> = xs.iter().map(|&x| logk(x)).collect();
    let max = ls.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let first = ls.iter().position(|&l| l > max - 30.0);
    let last = ls.iter().rposition(|&l| l > max - 30.0);
    match (first, last) {
        (Some(a), Some(b)) if a > 0 && b + 1 < xs.len() => Ok((xs[a - 1], xs[b + 1])),
        _ => Err(Error::Oracle("density mass escapes [-400, 400]".into())),
    }
}

fn oracle_for(logk: impl Fn(f64) -> f64) -> Result<GridOracle> {
    let (lo, hi) = auto_range(&logk)?;
    grid_normalize(logk, lo, hi, 20_001)
}

fn scalar_cmlg(h: &[f64], alpha: &[f64], kappa: &[f64]) -> Result<CmlgParams> {
    Ok(CmlgParams::new(
        DMatrix::from_column_slice(h.len(), 1, h),
        DVector::from_column_slice(alpha),
        DVector::from_column_slice(kappa),
    )?)
}

/// Log kernel `Σ αᵢhᵢy − κᵢ exp(hᵢy)`, written out independently.
fn cmlg_log_kernel(h: &[f64], alpha: &[f64], kappa: &[f64]) -> impl Fn(f64) -> f64 {
    let (h, alpha, kappa) = (h.to_vec(), alpha.to_vec(), kappa.to_vec());
    move |y| {
        (0..h.len())
            .map(|i| alpha[i] * h[i] * y - kappa[i] * (h[i] * y).exp())
            .sum()
    }
}

fn mlg_law(rec: &mut Recorder, seed: u64) -> Result<()> {
    let draws = 100_000;
    let alpha = [0.5, 1.0, 3.0];
    let kappa = [1.0, 2.0, 0.5];
    let params = MlgParams::standard(DVector::from_row_slice(&alpha), DVector::from_row_slice(&kappa))?;
    let mut rng = chain_rng(seed, 0);
    let mut cols = vec![Vec::with_capacity(draws); 3];
    for _ in 0..draws {
        let w = mlg_sample(&mut rng, &params);
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(w[j].exp());
        }
    }
    for j in 0..3 {
        let g = Gamma::new(alpha[j], kappa[j]).map_err(|e| Error::Oracle(e.to_string()))?;
        let ks = ks_test(&cols[j], |x| g.cdf(x));
        rec.above(format!("ks_p_gamma({},{})", alpha[j], kappa[j]), ks.p_value, 0.01);
    }
    for &(mu, v, a, k) in &[(0.3, 1.7, 2.0, 1.5), (-1.0, 0.4, 0.5, 3.0)] {
        let p = MlgParams::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, v),
            DVector::from_element(1, a),
            DVector::from_element(1, k),
        )?;
        let f = |y: f64| p.log_density(&DVector::from_element(1, y)).unwrap_or(f64::NEG_INFINITY);
        let (lo, hi) = auto_range(&f)?;
        let g = grid_normalize(|y| f(y), lo, hi, 200_001)?;
        rec.below(format!("normalizer_error({mu},{v},{a},{k})"), (g.normalizer() - 1.0).abs(), 1e-4);
    }
    Ok(())
}

/// KS distances of `MLG(0, α^{1/2}, α, α)` to `N(0,1)`, with common random
/// numbers across `α` (draw `i` always uses stream `i`).
pub fn gaussian_limit_distances(alphas: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    alphas
        .iter()
        .map(|&a| {
            let p = mlg_gaussian_limit_params(DVector::zeros(1), DMatrix::identity(1, 1), a)?;
            let xs: Vec<f64> = (0..draws)
                .map(|i| mlg_sample(&mut chain_rng(seed, i as u64), &p)[0])
                .collect();
            Ok(ks_test(&xs, |x| normal.cdf(x)).statistic)
        })
        .collect()
}

fn gaussian_limit(rec: &mut Recorder, seed: u64) -> Result<()> {
    let alphas = [10.0, 100.0, 1000.0, 10_000.0];
    let d = gaussian_limit_distances(&alphas, 100_000, seed)?;
    for (a, v) in alphas.iter().zip(&d) {
        rec.record(format!("ks_distance(alpha={a})"), *v);
    }
    rec.flag("monotone_decrease", d.windows(2).all(|w| w[1] < w[0]));
    rec.below("ks_distance_at_1e4", d[3], 0.01);
    Ok(())
}

/// Total variation between projection draws and the grid oracle.
pub fn cmlg_tv(h: &[f64], alpha: &[f64], kappa: &[f64], draws: usize, seed: u64) -> Result<f64> {
    let c = scalar_cmlg(h, alpha, kappa)?;
    let oracle = oracle_for(cmlg_log_kernel(h, alpha, kappa))?;
    let mut rng = chain_rng(seed, 0);
    let xs: Vec<f64> = (0..draws).map(|_| cmlg_sample(&mut rng, &c)[0]).collect();
    Ok(oracle.tv_vs_samples(&xs, 50))
}

fn cmlg_grid(rec: &mut Recorder, seed: u64) -> Result<()> {
    let draws = 200_000;
    // Square H: the projection is exact.
    let exact: [(&[f64], &[f64], &[f64]); 3] = [
        (&[1.0], &[2.0], &[3.0]),
        (&[1.0], &[0.5], &[0.5]),
        (&[2.5], &[4.0], &[1.0]),
    ];
    for (k, (h, a, kp)) in exact.iter().enumerate() {
        let tv = cmlg_tv(h, a, kp, draws, seed + k as u64)?;
        rec.below(format!("tv_exact(h={},a={},k={})", h[0], a[0], kp[0]), tv, 0.02);
    }
    // Truncated H = 1, α = κ = 1 at zero: e^Y − 1 | accepted ~ Exp(1).
    let c = scalar_cmlg(&[1.0], &[1.0], &[1.0])?;
    let mut rng = chain_rng(seed, 10);
    let mut attempts = 0usize;
    let mut xs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let (x, n) = cmlg_sample_truncated_counted(&mut rng, &c, 0.0, DEFAULT_MAX_ATTEMPTS)?;
        attempts += n;
        xs.push(x);
    }
    let acceptance = draws as f64 / attempts as f64;
    rec.below("truncated_acceptance_error", (acceptance - (-1.0f64).exp()).abs(), 0.01);
    let ks = ks_test(&xs, |y| if y <= 0.0 { 0.0 } else { 1.0 - (-(y.exp() - 1.0)).exp() });
    rec.above("truncated_ks_p", ks.p_value, 0.01);
    // Non-square H: discrepancy published, not asserted.
    let general: [(&str, Vec<f64>, Vec<f64>, Vec<f64>); 3] = [
        ("two_rows", vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]),
        (
            "variance_intercept",
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 10.0],
            vec![0.2, 1.5, 0.7, 0.05, 2.2, 10.0],
        ),
        (
            "inverse_scale",
            vec![0.3, -0.5, 0.8, 1.0],
            vec![10.0, 10.0, 10.0, 5.0],
            vec![10.0, 10.0, 10.0, 5.0],
        ),
    ];
    for (k, (label, h, a, kp)) in general.iter().enumerate() {
        let tv = cmlg_tv(h, a, kp, draws, seed + 20 + k as u64)?;
        rec.record(format!("tv_general({label})"), tv);
    }
    Ok(())
}

/// Hyperparameters for the calibration experiment.
pub fn sbc_config(seed: u64, fault: Option<FaultInjection>) -> SbcConfig {
    SbcConfig {
        seed,
        fault,
        ..SbcConfig::default()
    }
}

fn sbc(rec: &mut Recorder, seed: u64) -> Result<()> {
    let clean = sbc_run(&sbc_config(seed, None))?;
    for (name, chi) in clean.names.iter().zip(&clean.chi_square) {
        rec.above(format!("p({name})"), chi.p_value, 0.005);
    }
    rec.flag(
        "ranks_in_range",
        clean.ranks.iter().flatten().all(|&r| r <= clean.stored),
    );
    rec.below("failed_replicates", clean.failures as f64, 0.5);
    let mutant = sbc_run(&sbc_config(seed, Some(FaultInjection::DoubleKappaBeta2)))?;
    rec.below("mutant_min_p", mutant.min_p_value(), 1e-3);
    Ok(())
}

/// Posterior mean and variance of `σ²` from the sampler and from the
/// conjugate closed form, with Monte Carlo standard errors of the sampler
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantVarianceComparison {
    pub sampler_mean: f64,
    pub sampler_var: f64,
    pub mean_se: f64,
    pub var_se: f64,
    pub exact_mean: f64,
    pub exact_var: f64,
}

/// Intercept-only variance model with `σ²_{β2} = 1/α`, so that
/// `1/σ² ~ Gamma(α, α)` a priori. With the near-flat `β1` prior the
/// marginal posterior is `σ² | y ~ IG(α + (n − p1)/2, α + S/2)`, `S` the
/// least-squares residual sum of squares.
pub fn constant_variance_comparison(seed: u64, iterations: usize) -> Result<ConstantVarianceComparison> {
    let alpha = 1000.0;
    let shape = SyntheticShape {
        n: 200,
        p1: 2,
        p2: 1,
        likelihood: Likelihood::Gaussian,
    };
    let data = generate_synthetic(shape, &[1.0, 0.5], &[0.0], seed)?;
    let hyper = Hyperparams {
        alpha,
        sigma2_beta2: 1.0 / alpha,
        ..Hyperparams::default()
    };
    let spec = data.constant_variance_spec(hyper)?;
    let cfg = GibbsConfig {
        iterations,
        burn_in: iterations / 10,
        seed,
        ..GibbsConfig::default()
    };
    let chain = run_chain(&spec, &cfg, 0, &NoClock)?;
    let s2: Vec<f64> = chain.states.iter().map(|s| (-s.beta2[0]).exp()).collect();
    let n = s2.len() as f64;
    let mean = s2.iter().sum::<f64>() / n;
    let dev2: Vec<f64> = s2.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = dev2.iter().sum::<f64>() / (n - 1.0);
    let m4 = dev2.iter().map(|d| d * d).sum::<f64>() / n;
    let ess = effective_size(&s2).max(1.0);
    let ess2 = effective_size(&dev2).max(1.0);

    let x = &data.x1;
    let y = DVector::from_column_slice(data.dataset.y());
    let xtx = x.transpose() * x;
    let xty = x.transpose() * &y;
    let bhat = xtx
        .cholesky()
        .ok_or_else(|| Error::Oracle("singular design".into()))?
        .solve(&xty);
    let resid = &y - x * bhat;
    let ss = resid.dot(&resid);
    let a_post = alpha + (200.0 - 2.0) / 2.0;
    let b_post = alpha + ss / 2.0;
    Ok(ConstantVarianceComparison {
        sampler_mean: mean,
        sampler_var: var,
        mean_se: (var / ess).sqrt(),
        var_se: ((m4 - var * var).max(0.0) / ess2).sqrt(),
        exact_mean: b_post / (a_post - 1.0),
        exact_var: b_post * b_post / ((a_post - 1.0).powi(2) * (a_post - 2.0)),
    })
}

fn constant_variance(rec: &mut Recorder, seed: u64) -> Result<()> {
    let c = constant_variance_comparison(seed, 20_000)?;
    rec.record("sampler_mean", c.sampler_mean);
    rec.record("exact_mean", c.exact_mean);
    rec.record("sampler_var", c.sampler_var);
    rec.record("exact_var", c.exact_var);
    rec.below("mean_error_in_se", (c.sampler_mean - c.exact_mean).abs() / c.mean_se, 3.0);
    rec.below("var_error_in_se", (c.sampler_var - c.exact_var).abs() / c.var_se, 3.0);
    Ok(())
}

fn laplace(rec: &mut Recorder, seed: u64) -> Result<()> {
    let small = laplace_mixture_check(2.0, 100_000, seed)?;
    rec.above("mixture_ks_p", small.ks.p_value, 0.01);
    rec.below(
        "variance_error_in_se",
        (small.variance - 2.0).abs() / small.variance_se,
        3.0,
    );
    let big = laplace_mixture_check(2.0, 1_000_000, seed + 1)?;
    rec.below("excess_kurtosis_error", (big.excess_kurtosis - 3.0).abs(), 0.2);

    let mut worst_lambda: f64 = 0.0;
    let mut worst_mu: f64 = 0.0;
    let mut text_ratio: f64 = 0.0;
    let mut worst_core: f64 = 0.0;
    for &(r2, s2) in &[(1.0, 2.0), (0.3, 0.7), (4.0, 1.5), (0.01, 10.0)] {
        let (mu, lambda) = inverse_gaussian_by_completing_square(r2, s2)?;
        worst_lambda = worst_lambda.max((lambda / (2.0 / s2) - 1.0).abs());
        worst_mu = worst_mu.max((mu / (2.0 / (r2 * s2)).sqrt() - 1.0).abs());
        text_ratio = text_ratio.max(mu / (1.0 / (r2 * s2)).sqrt());
        let (cm, cl) = hetgibbs_core::gibbs::inverse_gaussian_params(r2, s2);
        worst_core = worst_core.max((cm / mu - 1.0).abs()).max((cl / lambda - 1.0).abs());
    }
    rec.below("lambda_vs_2_over_sigma2_relerr", worst_lambda, 1e-6);
    rec.below("mean_vs_sqrt_2_over_r2_sigma2_relerr", worst_mu, 1e-6);
    rec.below("sampler_params_vs_oracle_relerr", worst_core, 1e-6);
    // Ratio of the derived mean to the `{1/(r²σ²)}^{1/2}` variant: √2.
    rec.record("derived_over_short_form_mean", text_ratio);

    let (mu, lambda) = (0.8, 1.3);
    let oracle = oracle_for(|z| if z > 0.0 { inverse_gaussian_logpdf(z, mu, lambda) } else { -1e300 })?;
    let mut rng = chain_rng(seed, 2);
    let zs = (0..200_000)
        .map(|_| inverse_gaussian(&mut rng, mu, lambda))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    rec.below("inverse_gaussian_sampler_tv", oracle.tv_vs_samples(&zs, 50), 0.02);
    Ok(())
}

/// Outcome of the parameter-recovery experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    pub replicates: usize,
    /// Replicates where every component lies within 3 posterior SDs.
    pub all_covered: usize,
    /// Per-component coverage counts, `β1` then `β2`.
    pub per_component: Vec<usize>,
    pub failures: usize,
    pub msev_heteroskedastic: f64,
    pub msev_constant: f64,
}

pub const RECOVERY_BETA1: [f64; 2] = [1.0, 2.0];
pub const RECOVERY_BETA2: [f64; 3] = [0.5, -0.8, 0.4];

pub fn recovery_experiment(seed: u64, replicates: usize, iterations: usize) -> Result<RecoveryOutcome> {
    let shape = SyntheticShape {
        n: 2000,
        p1: 2,
        p2: 3,
        likelihood: Likelihood::Gaussian,
    };
    let truth: Vec<f64> = RECOVERY_BETA1.iter().chain(&RECOVERY_BETA2).copied().collect();
    let cfg = GibbsConfig {
        iterations,
        burn_in: iterations / 5,
        ..GibbsConfig::default()
    };
    let covered = par_map(replicates, |r| -> Result<Vec<bool>> {
        let rseed = seed.wrapping_add(1000 * r as u64);
        let data = generate_synthetic(shape, &RECOVERY_BETA1, &RECOVERY_BETA2, rseed)?;
        let spec = data.spec(Hyperparams::default())?;
        let chain = run_chain(&spec, &GibbsConfig { seed: rseed, ..cfg.clone() }, 0, &NoClock)?;
        let flat: Vec<Vec<f64>> = chain
            .states
            .iter()
            .map(|s| s.beta1.iter().chain(s.beta2.iter()).copied().collect())
            .collect();
        Ok((0..truth.len())
            .map(|j| {
                let xs: Vec<f64> = flat.iter().map(|v| v[j]).collect();
                let n = xs.len() as f64;
                let m = xs.iter().sum::<f64>() / n;
                let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
                (m - truth[j]).abs() <= 3.0 * sd
            })
            .collect())
    });
    let mut per_component = vec![0; truth.len()];
    let mut all_covered = 0;
    let mut failures = 0;
    for c in covered {
        match c {
            Ok(c) => {
                for (j, &ok) in c.iter().enumerate() {
                    per_component[j] += ok as usize;
                }
                all_covered += c.iter().all(|&ok| ok) as usize;
            }
            Err(_) => failures += 1,
        }
    }
    let data = generate_synthetic(shape, &RECOVERY_BETA1, &RECOVERY_BETA2, seed)?;
    let hyper = Hyperparams::default();
    let scheme = CvScheme::new(2000, 5, seed)?;
    let cv_cfg = GibbsConfig { seed, ..cfg };
    let het = run_cv(&data.spec(hyper)?, &cv_cfg, &scheme)?;
    let con = run_cv(&data.constant_variance_spec(hyper)?, &cv_cfg, &scheme)?;
    Ok(RecoveryOutcome {
        replicates,
        all_covered,
        per_component,
        failures,
        msev_heteroskedastic: het.pooled_msev,
        msev_constant: con.pooled_msev,
    })
}

fn recovery(rec: &mut Recorder, seed: u64) -> Result<()> {
    let out = recovery_experiment(seed, 50, 5000)?;
    let n = out.replicates as f64;
    for (j, c) in out.per_component.iter().enumerate() {
        rec.record(format!("coverage_component_{}", j + 1), *c as f64 / n);
    }
    rec.above("fraction_all_within_3sd", out.all_covered as f64 / n, 0.95 - 1e-12);
    rec.below("failed_replicates", out.failures as f64, 0.5);
    rec.record("msev_heteroskedastic", out.msev_heteroskedastic);
    rec.record("msev_constant", out.msev_constant);
    rec.flag("heteroskedastic_beats_constant", out.msev_heteroskedastic < out.msev_constant);
    Ok(())
}

/// Regime-shift volatility experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsvmOutcome {
    pub radius_error: f64,
    pub regime_means: [f64; 2],
    pub min_inverse_scale: f64,
    pub stored: usize,
    pub fallbacks: u64,
}

pub const ESVM_DELTA: f64 = 0.1;

pub fn esvm_experiment(seed: u64, iterations: usize, delta: f64) -> Result<EsvmOutcome> {
    let t = 1000;
    let mut rng = chain_rng(seed, 0);
    let returns: Vec<f64> = (0..t)
        .map(|i| {
            let sd = if i < t / 2 { 1.0 } else { 3.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    let inputs = esvm_inputs(&returns, None)?;
    let reservoir = build_reservoir(50, inputs.ncols(), seed, 0.1, delta)?;
    let eig = reservoir.w.complex_eigenvalues();
    let radius = eig.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max);
    let radius_error = (radius - delta).abs().max((spectral_radius(&reservoir.w)? - delta).abs());
    let es = EsvmSpec::new(reservoir, inputs, 1000.0, EsvmSpec::default_hyper())?;
    let (spec, _) = esvm_to_gbhm(&es, &returns)?;
    let cfg = GibbsConfig {
        iterations,
        burn_in: iterations / 5,
        seed,
        ..GibbsConfig::default()
    };
    let chain = run_chain(&spec, &cfg, 0, &NoClock)?;
    let n = spec.n();
    let mut post = vec![0.0; n];
    for s in &chain.states {
        for (p, v) in post.iter_mut().zip(s.variance(&spec).iter()) {
            *p += v;
        }
    }
    let k = chain.states.len() as f64;
    // Row i models return i + 1.
    let split = t / 2 - 1;
    let first = post[..split].iter().sum::<f64>() / (k * split as f64);
    let second = post[split..].iter().sum::<f64>() / (k * (n - split) as f64);
    let min_inverse_scale = chain
        .states
        .iter()
        .map(|s| 1.0 / s.sigma_eta2)
        .fold(f64::INFINITY, f64::min);
    Ok(EsvmOutcome {
        radius_error,
        regime_means: [first, second],
        min_inverse_scale,
        stored: chain.states.len(),
        fallbacks: chain.diagnostics.truncation_fallbacks,
    })
}

fn esvm(rec: &mut Recorder, seed: u64) -> Result<()> {
    let out = esvm_experiment(seed, 5000, ESVM_DELTA)?;
    rec.below("spectral_radius_error", out.radius_error, 1e-10);
    rec.record("regime1_mean_variance", out.regime_means[0]);
    rec.record("regime2_mean_variance", out.regime_means[1]);
    rec.below("regime1_relerr", (out.regime_means[0] / 1.0 - 1.0).abs(), 0.25);
    rec.below("regime2_relerr", (out.regime_means[1] / 9.0 - 1.0).abs(), 0.25);
    rec.above("min_inverse_scale_draw", out.min_inverse_scale, 7.0);
    rec.record("tail_fallbacks", out.fallbacks as f64);
    Ok(())
}

fn relerr(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Two-draw, one-observation spec: `X1 = X2 = [1]`, `y = 0.5`.
fn tiny_spec() -> Result<ModelSpec> {
    Ok(ModelSpec::new(
        DVector::from_element(1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 0),
        Likelihood::Gaussian,
        Hyperparams::default(),
    )?)
}

fn tiny_state(spec: &ModelSpec, b1: f64, b2: f64) -> ChainState {
    let mut s = ChainState::initial(spec);
    s.beta1 = DVector::from_element(1, b1);
    s.beta2 = DVector::from_element(1, b2);
    s
}

fn metrics(rec: &mut Recorder) -> Result<()> {
    let tol = 1e-12;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut worst: f64 = 0.0;
    worst = worst.max(relerr(log_density(Likelihood::Gaussian, 0.0, 0.0, 1.0), -0.5 * two_pi.ln()));
    worst = worst.max(relerr(log_density(Likelihood::Laplace, 0.0, 0.0, 2.0), -(2.0f64).ln()));
    rec.below("log_density_relerr", worst, tol);

    let ll = PointwiseLogLik {
        values: DMatrix::from_row_slice(2, 1, &[-1.0, -3.0]),
        mode: Likelihood::Gaussian,
    };
    let w = waic(&ll)?;
    let lppd = (((-1.0f64).exp() + (-3.0f64).exp()) / 2.0).ln();
    let expected = -2.0 * (lppd - 2.0);
    rec.below("waic_relerr", relerr(w.waic, expected).max(relerr(w.p_waic, 2.0)), tol);

    let m1 = msev(&[1.0, -1.0], &[0.0, 0.0], &[1.0, 1.0])?;
    let m2 = msev(&[2.0, 0.0], &[0.0, 0.0], &[1.0, 1.0])?;
    let m3 = msev(&[0.0], &[0.0], &[0.0])?;
    rec.below("msev_relerr", relerr(m1, 0.0).max(relerr(m2, 5.0)).max(relerr(m3, 0.0)), tol);

    // Draws (β1, β2) = (0, 0) and (2, ln 2); plug-in at (1, ln 2 / 2).
    let spec = tiny_spec()?;
    let states = vec![tiny_state(&spec, 0.0, 0.0), tiny_state(&spec, 2.0, 2.0f64.ln())];
    let ll = loglik_pointwise(&states, &spec)?;
    let d = dic(&ll, &states, &spec)?;
    let gauss = |y: f64, mu: f64, s2: f64| -0.5 * (two_pi * s2).ln() - (y - mu) * (y - mu) / (2.0 * s2);
    let l1 = gauss(0.5, 0.0, 1.0);
    let l2 = gauss(0.5, 2.0, 0.5);
    let lbar = gauss(0.5, 1.0, 2.0f64.powf(-0.5));
    let p_dic = 2.0 * (lbar - 0.5 * (l1 + l2));
    let expected = -2.0 * lbar + 2.0 * p_dic;
    rec.below("dic_hand_relerr", relerr(d.dic, expected).max(relerr(d.p_dic, p_dic)), tol);

    let one = vec![tiny_state(&spec, 0.3, 0.1); 3];
    let d1 = dic(&loglik_pointwise(&one, &spec)?, &one, &spec)?;
    let l = gauss(0.5, 0.3, (-0.1f64).exp());
    rec.below("dic_single_draw_relerr", relerr(d1.dic, -2.0 * l).max(d1.p_dic.abs()), tol);
    Ok(())
}

/// Wall time and per-block profile of the default fit at the reference size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceOutcome {
    pub seconds: f64,
    pub iterations: usize,
    pub block_fractions: Vec<(String, f64)>,
}

pub fn performance_run(seed: u64, iterations: usize) -> Result<PerformanceOutcome> {
    let n = 1000;
    let mut rng = chain_rng(seed, 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = DMatrix::from_fn(n, 5, |_, j| if j == 0 { 1.0 } else { normal() });
    let mut rng2 = chain_rng(seed, 1);
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng2.random(), rng2.random()]).collect();
    let centers: Vec<[f64; 2]> = (0..150).map(|_| [rng2.random(), rng2.random()]).collect();
    let psi = bisquare_basis(&coords, &centers, &vec![0.3; 150])?;
    let y = DVector::from_fn(n, |i, _| {
        let mu = 1.0 + x[(i, 1)] - 0.5 * x[(i, 2)];
        let sd = (0.5 * (0.3 * x[(i, 3)] - 0.2 * x[(i, 4)])).exp();
        let z: f64 = StandardNormal.sample(&mut rng2);
        mu + sd * z
    });
    let spec = ModelSpec::new(
        y,
        x.clone(),
        psi.clone(),
        x,
        psi,
        Likelihood::Gaussian,
        Hyperparams::default(),
    )?;
    let cfg = GibbsConfig {
        iterations,
        burn_in: iterations / 5,
        seed,
        ..GibbsConfig::default()
    };
    let start = Instant::now();
    let chains = run_chains(&spec, &cfg)?;
    let states = &chains[0].chain.states;
    let ll = loglik_pointwise(states, &spec)?;
    dic(&ll, states, &spec)?;
    waic(&ll)?;
    let seconds = start.elapsed().as_secs_f64();
    let nanos = chains[0].chain.diagnostics.block_nanos;
    let total = nanos.iter().sum::<u64>().max(1) as f64;
    Ok(PerformanceOutcome {
        seconds,
        iterations,
        block_fractions: Block::ALL
            .iter()
            .map(|b| (b.name().to_string(), nanos[*b as usize] as f64 / total))
            .collect(),
    })
}

fn performance(rec: &mut Recorder, seed: u64) -> Result<()> {
    let out = performance_run(seed, 5000)?;
    rec.below("fit_seconds", out.seconds, 600.0);
    for (name, f) in &out.block_fractions {
        rec.record(format!("share_{name}"), *f);
    }
    Ok(())
}
