//! Independent reference computations for validating the samplers:
//! grid-normalized densities, goodness-of-fit tests, synthetic data,
//! simulation-based calibration and the Laplace scale-mixture identity.
//!
//! Nothing here evaluates a full conditional through the sampler's own
//! code; the references are built from densities written out directly.

use hetgibbs_core::design::{Column, Dataset, Hyperparams, Likelihood, ModelSpec};
use hetgibbs_core::gibbs::{run_chain, FaultInjection, GibbsConfig, NoClock};
use hetgibbs_core::mlg::{mlg_sample, MlgParams};
use hetgibbs_core::random::chain_rng;
use hetgibbs_core::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::run::par_map;

/// Relative density allowed at either grid end.
pub const TAIL_RATIO: f64 = 1e-8;

/// A 1-D density tabulated on a uniform grid and normalized by the
/// trapezoid rule.
#[derive(Debug, Clone)]
pub struct GridOracle {
    grid: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    log_normalizer: f64,
}

/// Tabulates `exp(logdensity)` on `points` uniform nodes over `[lo, hi]`.
pub fn grid_normalize(
    logdensity: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<GridOracle> {
    if points < 1000 {
        return Err(Error::Oracle(format!("need at least 1000 grid points, got {points}")));
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Oracle(format!("bad grid range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let logs: Vec<f64> = grid.iter().map(|&x| logdensity(x)).collect();
    if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::Oracle("log density is not finite on the grid".into()));
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Oracle("density vanishes on the whole grid".into()));
    }
    let mut density: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    if density[0] > TAIL_RATIO || density[points - 1] > TAIL_RATIO {
        return Err(Error::Oracle(format!(
            "grid [{lo}, {hi}] truncates the density: end ratios {:e}, {:e}",
            density[0],
            density[points - 1]
        )));
    }
    let mut cdf = vec![0.0; points];
    for i in 1..points {
        cdf[i] = cdf[i - 1] + 0.5 * step * (density[i - 1] + density[i]);
    }
    let total = cdf[points - 1];
    for v in cdf.iter_mut() {
        *v /= total;
    }
    for v in density.iter_mut() {
        *v /= total;
    }
    Ok(GridOracle {
        grid,
        density,
        cdf,
        log_normalizer: max + total.ln(),
    })
}

impl GridOracle {
    /// Integral of the unnormalized density.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let lo = self.grid[0];
        let h = self.spacing();
        if x <= lo || x >= *self.grid.last().expect("nonempty") {
            return None;
        }
        let i = (((x - lo) / h) as usize).min(self.grid.len() - 2);
        Some((i, (x - self.grid[i]) / h))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.density[i] * (1.0 - t) + self.density[i + 1] * t,
            None => 0.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i]),
            None if x <= self.grid[0] => 0.0,
            None => 1.0,
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c < p);
        if i == 0 {
            return self.grid[0];
        }
        if i >= self.grid.len() {
            return *self.grid.last().expect("nonempty");
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        self.grid[i - 1] + t * self.spacing()
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m))
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.spacing();
        (1..self.grid.len())
            .map(|i| {
                0.5 * h * (f(self.grid[i - 1]) * self.density[i - 1] + f(self.grid[i]) * self.density[i])
            })
            .sum()
    }

    /// Total-variation distance between the oracle and the histogram of
    /// `samples` over `bins` bins of equal oracle mass.
    pub fn tv_vs_samples(&self, samples: &[f64], bins: usize) -> f64 {
        let edges: Vec<f64> = (1..bins).map(|k| self.quantile(k as f64 / bins as f64)).collect();
        let mut counts = vec![0usize; bins];
        for &x in samples {
            counts[edges.partition_point(|&e| e < x)] += 1;
        }
        let n = samples.len() as f64;
        let mut prev = 0.0;
        let mut tv = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let upper = if k + 1 < bins { self.cdf(edges[k]) } else { 1.0 };
            tv += (c as f64 / n - (upper - prev)).abs();
            prev = upper;
        }
        0.5 * tv
    }
}

/// Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution with the small-sample
/// correction `(√n + 0.12 + 0.11/√n)·D`.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_pvalue(d, x.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson goodness of fit with `k − 1` degrees of freedom.
pub fn chi_square_test(observed: &[f64], expected: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::Oracle("chi-square needs matching bins, at least two".into()));
    }
    if expected.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Oracle("expected counts must be positive".into()));
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(df).map_err(|e| Error::Oracle(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: dist.sf(statistic),
    })
}

/// Laplace(`mu`, `b`) distribution function.
pub fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    let z = (x - mu) / b;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Dimensions of a synthetic fixed-effects problem; `p1`, `p2` count the
/// intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticShape {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub likelihood: Likelihood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub beta1: Vec<f64>,
    pub eta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub eta2: Vec<f64>,
    pub seed: u64,
    pub likelihood: Likelihood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: SyntheticTruth,
    /// Mean design with intercept, on the raw covariate scale.
    pub x1: DMatrix<f64>,
    /// Variance design with intercept, on the raw covariate scale.
    pub x2: DMatrix<f64>,
}

impl SyntheticData {
    /// Model over the raw designs, so the truth is on the fitted scale.
    pub fn spec(&self, hyper: Hyperparams) -> Result<ModelSpec> {
        let n = self.x1.nrows();
        let y = DVector::from_column_slice(self.dataset.y());
        Ok(ModelSpec::new(
            y,
            self.x1.clone(),
            DMatrix::zeros(n, 0),
            self.x2.clone(),
            DMatrix::zeros(n, 0),
            self.truth.likelihood,
            hyper,
        )?)
    }

    /// Same data with an intercept-only variance block.
    pub fn constant_variance_spec(&self, hyper: Hyperparams) -> Result<ModelSpec> {
        let n = self.x1.nrows();
        Ok(ModelSpec::new(
            DVector::from_column_slice(self.dataset.y()),
            self.x1.clone(),
            DMatrix::zeros(n, 0),
            DMatrix::from_element(n, 1, 1.0),
            DMatrix::zeros(n, 0),
            self.truth.likelihood,
            hyper,
        )?)
    }
}

/// Draws `N(0,1)` covariates and a response from the stated coefficients:
/// `μ = x1′β1`, `σ² = exp(−x2′β2)`, `y ~ N(μ, σ²)` or Laplace with
/// `b = (σ²/2)^{1/2}`.
pub fn generate_synthetic(
    shape: SyntheticShape,
    beta1: &[f64],
    beta2: &[f64],
    seed: u64,
) -> Result<SyntheticData> {
    let SyntheticShape { n, p1, p2, likelihood } = shape;
    if n == 0 || p1 == 0 || p2 == 0 || beta1.len() != p1 || beta2.len() != p2 {
        return Err(Error::Oracle(format!(
            "shape n={n}, p1={p1}, p2={p2} does not match coefficient lengths {}, {}",
            beta1.len(),
            beta2.len()
        )));
    }
    let mut rng = chain_rng(seed, 0);
    let mut draw_cols = |k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    };
    let c1 = draw_cols(p1 - 1);
    let c2 = draw_cols(p2 - 1);
    let design = |cols: &[Vec<f64>]| {
        DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
    };
    let x1 = design(&c1);
    let x2 = design(&c2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mu: f64 = (0..p1).map(|j| x1[(i, j)] * beta1[j]).sum();
        let lin: f64 = (0..p2).map(|j| x2[(i, j)] * beta2[j]).sum();
        let sigma2 = (-lin).exp();
        let e = match likelihood {
            Likelihood::Gaussian => sigma2.sqrt() * { let z: f64 = StandardNormal.sample(&mut rng); z },
            Likelihood::Laplace => {
                let b = (0.5 * sigma2).sqrt();
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        };
        y.push(mu + e);
    }
    let mut ds = Dataset::new("y", y)?;
    for (j, c) in c1.into_iter().enumerate() {
        ds = ds.with_column(format!("x1_{}", j + 1), Column::Numeric(c))?;
    }
    for (j, c) in c2.into_iter().enumerate() {
        ds = ds.with_column(format!("x2_{}", j + 1), Column::Numeric(c))?;
    }
    Ok(SyntheticData {
        dataset: ds,
        truth: SyntheticTruth {
            beta1: beta1.to_vec(),
            eta1: Vec::new(),
            beta2: beta2.to_vec(),
            eta2: Vec::new(),
            seed,
            likelihood,
        },
        x1,
        x2,
    })
}

/// Settings of a simulation-based calibration experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SbcConfig {
    pub n: usize,
    pub p1: usize,
    pub p2: usize,
    pub hyper: Hyperparams,
    pub replicates: usize,
    pub burn_in: usize,
    /// Posterior draws kept per replicate (`L`).
    pub stored: usize,
    pub thin: usize,
    pub bins: usize,
    pub seed: u64,
    pub fault: Option<FaultInjection>,
}

impl Default for SbcConfig {
    fn default() -> Self {
        Self {
            n: 50,
            p1: 2,
            p2: 2,
            hyper: Hyperparams {
                sigma2_beta1: 1.0,
                sigma2_beta2: 1.0,
                ..Hyperparams::default()
            },
            replicates: 500,
            burn_in: 200,
            stored: 100,
            thin: 10,
            bins: 20,
            seed: 1,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbcReport {
    pub names: Vec<String>,
    /// `ranks[j][r]`: rank of parameter `j` in replicate `r`, in `0..=L`.
    pub ranks: Vec<Vec<usize>>,
    pub chi_square: Vec<ChiSquareResult>,
    pub failures: usize,
    pub stored: usize,
}

impl SbcReport {
    pub fn min_p_value(&self) -> f64 {
        self.chi_square.iter().map(|c| c.p_value).fold(1.0, f64::min)
    }
}

/// Bin of rank `r` among `L + 1` possible ranks.
pub fn rank_bin(rank: usize, stored: usize, bins: usize) -> usize {
    rank * bins / (stored + 1)
}

/// Chi-square uniformity test of ranks in `0..=stored`; expected counts
/// follow the number of ranks falling in each bin.
pub fn rank_uniformity(ranks: &[usize], stored: usize, bins: usize) -> Result<ChiSquareResult> {
    let mut observed = vec![0.0; bins];
    let mut width = vec![0.0; bins];
    for r in 0..=stored {
        width[rank_bin(r, stored, bins)] += 1.0;
    }
    for &r in ranks {
        observed[rank_bin(r, stored, bins)] += 1.0;
    }
    let total = ranks.len() as f64;
    let expected: Vec<f64> = width.iter().map(|w| total * w / (stored + 1) as f64).collect();
    chi_square_test(&observed, &expected)
}

/// Simulation-based calibration of the fixed-effects Gaussian model.
///
/// Each replicate draws `β1 ~ N(0, σ²_{β1} I)` and
/// `β2 ~ MLG(0, α^{1/2}σ_{β2} I, α·1, α·1)`, simulates data, runs one chain
/// and records how many stored draws fall below the truth.
pub fn sbc_run(cfg: &SbcConfig) -> Result<SbcReport> {
    if cfg.replicates < 2 || cfg.stored == 0 || cfg.bins < 2 || cfg.thin == 0 {
        return Err(Error::Oracle("degenerate calibration settings".into()));
    }
    let hp = cfg.hyper;
    let p = cfg.p1 + cfg.p2;
    let results = par_map(cfg.replicates, |rep| -> Result<Vec<usize>> {
        let rep_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(rep as u64);
        let mut rng = chain_rng(rep_seed, 0);
        let normal = Normal::new(0.0, hp.sigma2_beta1.sqrt()).expect("positive variance");
        let beta1: Vec<f64> = (0..cfg.p1).map(|_| normal.sample(&mut rng)).collect();
        let prior2 = MlgParams::new(
            DVector::zeros(cfg.p2),
            DMatrix::identity(cfg.p2, cfg.p2) * (hp.alpha.sqrt() * hp.sigma2_beta2.sqrt()),
            DVector::from_element(cfg.p2, hp.alpha),
            DVector::from_element(cfg.p2, hp.alpha),
        )?;
        let beta2: Vec<f64> = mlg_sample(&mut rng, &prior2).iter().copied().collect();
        let shape = SyntheticShape {
            n: cfg.n,
            p1: cfg.p1,
            p2: cfg.p2,
            likelihood: Likelihood::Gaussian,
        };
        let data = generate_synthetic(shape, &beta1, &beta2, rep_seed.wrapping_add(1 << 40))?;
        let spec = data.spec(hp)?;
        let gibbs = GibbsConfig {
            iterations: cfg.burn_in + cfg.stored * cfg.thin,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            seed: rep_seed,
            chains: 1,
            fault: cfg.fault,
            ..GibbsConfig::default()
        };
        let chain = run_chain(&spec, &gibbs, 0, &NoClock)?;
        let truth: Vec<f64> = beta1.iter().chain(&beta2).copied().collect();
        Ok((0..p)
            .map(|j| {
                chain
                    .states
                    .iter()
                    .filter(|s| {
                        let v = if j < cfg.p1 { s.beta1[j] } else { s.beta2[j - cfg.p1] };
                        v < truth[j]
                    })
                    .count()
            })
            .collect())
    });
    let mut ranks = vec![Vec::new(); p];
    let mut failures = 0;
    for r in results {
        match r {
            Ok(rs) => {
                for (j, v) in rs.into_iter().enumerate() {
                    ranks[j].push(v);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if ranks[0].len() < 2 {
        return Err(Error::Oracle(format!("{failures} of {} replicates failed", cfg.replicates)));
    }
    let chi_square = ranks
        .iter()
        .map(|r| rank_uniformity(r, cfg.stored, cfg.bins))
        .collect::<Result<Vec<_>>>()?;
    let names = (1..=cfg.p1)
        .map(|i| format!("beta1_{i}"))
        .chain((1..=cfg.p2).map(|i| format!("beta2_{i}")))
        .collect();
    Ok(SbcReport {
        names,
        ranks,
        chi_square,
        failures,
        stored: cfg.stored,
    })
}

/// Outcome of the exponential scale-mixture simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceCheck {
    pub ks: KsResult,
    pub variance: f64,
    pub variance_se: f64,
    pub excess_kurtosis: f64,
}

/// Simulates `s ~ Exp(mean σ²)`, `y | s ~ N(0, s)` and compares `y` with
/// Laplace(0, (σ²/2)^{1/2}).
pub fn laplace_mixture_check(sigma2: f64, draws: usize, seed: u64) -> Result<LaplaceCheck> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) || draws < 4 {
        return Err(Error::Oracle(format!("bad mixture check inputs ({sigma2}, {draws})")));
    }
    let mut rng = chain_rng(seed, 0);
    let exp = Exp::new(1.0 / sigma2).expect("positive rate");
    let y: Vec<f64> = (0..draws)
        .map(|_| {
            let s: f64 = exp.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            s.sqrt() * z
        })
        .collect();
    let b = (0.5 * sigma2).sqrt();
    let ks = ks_test(&y, |x| laplace_cdf(x, 0.0, b));
    let n = draws as f64;
    let mean = y.iter().sum::<f64>() / n;
    let m2 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = y.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    Ok(LaplaceCheck {
        ks,
        variance: m2 * n / (n - 1.0),
        variance_se: ((m4 - m2 * m2) / n).sqrt(),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// Recovers the Inverse-Gaussian parameters of `z = 1/s` given the
/// squared residual and `σ²` by completing the square numerically.
///
/// The log conditional of `z` is tabulated straight from the augmented
/// model, `log N(r; 0, 1/z) + log Exp(1/z; mean σ²) + log|d(1/z)/dz|`;
/// after adding `(3/2) log z` it is exactly linear in `(1, z, 1/z)`. A least
/// squares fit of those coefficients gives `λ = −2·c_{1/z}` and
/// `μ² = λ / (−2·c_z)`.
pub fn inverse_gaussian_by_completing_square(residual2: f64, sigma2: f64) -> Result<(f64, f64)> {
    let log_conditional = |z: f64| {
        let s = 1.0 / z;
        let normal = -0.5 * (2.0 * std::f64::consts::PI * s).ln() - residual2 / (2.0 * s);
        let exponential = -sigma2.ln() - s / sigma2;
        let jacobian = -2.0 * z.ln();
        normal + exponential + jacobian
    };
    let zs: Vec<f64> = (1..=400).map(|i| 0.01 * i as f64 * (1.0 + 1.0 / sigma2)).collect();
    let a = DMatrix::from_fn(zs.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => zs[i],
        _ => 1.0 / zs[i],
    });
    let b = DVector::from_fn(zs.len(), |i, _| log_conditional(zs[i]) + 1.5 * zs[i].ln());
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Oracle(e.to_string()))?;
    let lambda = -2.0 * coef[2];
    let mu = (lambda / (-2.0 * coef[1])).sqrt();
    Ok((mu, lambda))
}

/// Inverse-Gaussian log density.
pub fn inverse_gaussian_logpdf(z: f64, mu: f64, lambda: f64) -> f64 {
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (lambda / (2.0 * std::f64::consts::PI * z.powi(3))).ln()
        - lambda * (z - mu).powi(2) / (2.0 * mu * mu * z)
}
