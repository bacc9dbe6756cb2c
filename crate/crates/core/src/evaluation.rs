//! Pointwise log-likelihoods, information criteria, MSEV, k-fold
//! cross-validation and posterior summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::{Likelihood, ModelSpec};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainState, Clock, GibbsConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `S × n` matrix of `log p(yᵢ | θ⁽ˢ⁾)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    pub values: DMatrix<f64>,
    pub mode: Likelihood,
}

impl PointwiseLogLik {
    pub fn draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn observations(&self) -> usize {
        self.values.ncols()
    }
}

/// Log density of one observation. Laplace uses scale `b = (σ²/2)^{1/2}` so
/// that its variance equals `σ²`.
pub fn log_density(mode: Likelihood, y: f64, mu: f64, sigma2: f64) -> f64 {
    let r = y - mu;
    match mode {
        Likelihood::Gaussian => -0.5 * (LN_2PI + sigma2.ln() + r * r / sigma2),
        Likelihood::Laplace => {
            let b = (0.5 * sigma2).sqrt();
            -(2.0 * b).ln() - r.abs() / b
        }
    }
}

fn state_loglik(spec: &ModelSpec, state: &ChainState) -> DVector<f64> {
    let mu = state.mean(spec);
    let s2 = state.variance(spec);
    DVector::from_fn(spec.n(), |i, _| {
        log_density(spec.likelihood, spec.response[i], mu[i], s2[i])
    })
}

/// Pointwise log-likelihood of every stored state.
pub fn loglik_pointwise(states: &[ChainState], spec: &ModelSpec) -> Result<PointwiseLogLik> {
    if states.is_empty() {
        return Err(Error::Dimension("no posterior draws".into()));
    }
    let mut values = DMatrix::zeros(states.len(), spec.n());
    for (s, state) in states.iter().enumerate() {
        if state.beta1.len() != spec.p1()
            || state.eta1.len() != spec.r1()
            || state.beta2.len() != spec.p2()
            || state.eta2.len() != spec.r2()
        {
            return Err(Error::Dimension(format!(
                "draw {s} does not match the model's block widths"
            )));
        }
        values.row_mut(s).copy_from(&state_loglik(spec, state).transpose());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pointwise log-likelihood".into()));
    }
    Ok(PointwiseLogLik {
        values,
        mode: spec.likelihood,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DicReport {
    pub dic: f64,
    pub p_dic: f64,
    /// `log p(y | θ̄)` at the posterior-mean coefficients.
    pub loglik_at_mean: f64,
    /// `S⁻¹ Σ_s log p(y | θ⁽ˢ⁾)`.
    pub mean_loglik: f64,
    /// All draws identical, so `p_DIC` is zero by construction.
    pub degenerate: bool,
}

fn mean_state(states: &[ChainState]) -> ChainState {
    let s = states.len() as f64;
    let mut m = states[0].clone();
    for st in &states[1..] {
        m.beta1 += &st.beta1;
        m.eta1 += &st.eta1;
        m.beta2 += &st.beta2;
        m.eta2 += &st.eta2;
    }
    m.beta1 /= s;
    m.eta1 /= s;
    m.beta2 /= s;
    m.eta2 /= s;
    m
}

/// `DIC = −2 log p(y|θ̄) + 2 p_DIC` with
/// `p_DIC = 2[log p(y|θ̄) − S⁻¹Σ_s log p(y|θ⁽ˢ⁾)]`; `θ̄` is the posterior mean
/// of the four coefficient blocks.
pub fn dic(ll: &PointwiseLogLik, states: &[ChainState], spec: &ModelSpec) -> Result<DicReport> {
    if states.is_empty() || ll.draws() != states.len() || ll.observations() != spec.n() {
        return Err(Error::Dimension(format!(
            "{} log-likelihood rows for {} draws",
            ll.draws(),
            states.len()
        )));
    }
    let degenerate = states.iter().all(|s| *s == states[0]);
    let plug = if degenerate {
        states[0].clone()
    } else {
        mean_state(states)
    };
    let at_mean = state_loglik(spec, &plug).sum();
    let s = ll.draws() as f64;
    let mean_ll = ll.values.row_iter().map(|r| r.sum()).sum::<f64>() / s;
    let (p_dic, mean_ll) = if degenerate {
        (0.0, at_mean)
    } else {
        (2.0 * (at_mean - mean_ll), mean_ll)
    };
    Ok(DicReport {
        dic: -2.0 * at_mean + 2.0 * p_dic,
        p_dic,
        loglik_at_mean: at_mean,
        mean_loglik: mean_ll,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaicReport {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// `WAIC = −2(lppd − p_WAIC)`; the per-observation variance uses divisor `S − 1`.
pub fn waic(ll: &PointwiseLogLik) -> Result<WaicReport> {
    let s = ll.draws();
    if s < 2 {
        return Err(Error::Dimension(format!(
            "WAIC needs at least two draws, got {s}"
        )));
    }
    let mut lppd = 0.0;
    let mut p = 0.0;
    for col in ll.values.column_iter() {
        let max = col.max();
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lppd += lse - (s as f64).ln();
        let mean = col.mean();
        p += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s - 1) as f64;
    }
    Ok(WaicReport {
        waic: -2.0 * (lppd - p),
        lppd,
        p_waic: p,
    })
}

/// `(1/n) Σ ((yᵢ − μ̂ᵢ)² − σ̂ᵢ²)²`.
pub fn msev(y: &[f64], mu_hat: &[f64], sigma2_hat: &[f64]) -> Result<f64> {
    let n = y.len();
    if mu_hat.len() != n || sigma2_hat.len() != n {
        return Err(Error::Dimension(format!(
            "msev inputs have lengths {n}, {}, {}",
            mu_hat.len(),
            sigma2_hat.len()
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("msev needs at least one observation".into()));
    }
    let total: f64 = (0..n)
        .map(|i| {
            let r = y[i] - mu_hat[i];
            let d = r * r - sigma2_hat[i];
            d * d
        })
        .sum();
    Ok(total / n as f64)
}

/// Point predictions from a set of draws: `μ̂ = X1β̄1 + Ψ1η̄1` and
/// `σ̂² = S⁻¹Σ_s exp(−X2β2⁽ˢ⁾ − Ψ2η2⁽ˢ⁾)`.
pub fn predict(states: &[ChainState], spec: &ModelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if states.is_empty() {
        return Err(Error::Dimension("no posterior draws".into()));
    }
    let m = mean_state(states);
    let mu = m.mean(spec);
    let mut s2 = DVector::zeros(spec.n());
    for st in states {
        s2 += st.variance(spec);
    }
    s2 /= states.len() as f64;
    Ok((mu.iter().copied().collect(), s2.iter().copied().collect()))
}

/// Fold labels for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvScheme {
    pub folds: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl CvScheme {
    /// Balanced labels `i mod k`, shuffled with `seed`.
    pub fn new(n: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds < 2 {
            return Err(Error::Config(format!("need at least two folds, got {folds}")));
        }
        if n < folds {
            return Err(Error::Config(format!(
                "{n} rows cannot fill {folds} nonempty folds"
            )));
        }
        let mut assignment: Vec<usize> = (0..n).map(|i| i % folds).collect();
        assignment.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            folds,
            assignment,
            seed,
        })
    }

    /// Rows in fold `f`.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }
}

/// Held-out predictions of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPrediction {
    pub fold: usize,
    pub rows: Vec<usize>,
    pub mu_hat: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub folds: Vec<FoldPrediction>,
    pub pooled_msev: f64,
}

/// Fits fold `f` on its training rows and predicts the held-out rows.
///
/// Chains of fold `f` start from seed `config.seed + f`.
pub fn fit_fold(
    spec: &ModelSpec,
    config: &GibbsConfig,
    scheme: &CvScheme,
    f: usize,
    clock: &dyn Clock,
) -> Result<FoldPrediction> {
    if scheme.assignment.len() != spec.n() {
        return Err(Error::Dimension(format!(
            "fold labels cover {} rows, model has {}",
            scheme.assignment.len(),
            spec.n()
        )));
    }
    let train = scheme.train_rows(f);
    let test = scheme.test_rows(f);
    let needed = spec.p1() + spec.p2();
    if train.len() < needed || test.is_empty() {
        return Err(Error::FoldTooSmall {
            fold: f,
            train: train.len(),
            needed,
        });
    }
    let fold_cfg = GibbsConfig {
        seed: config.seed.wrapping_add(f as u64),
        ..config.clone()
    };
    let train_spec = spec.subset(&train);
    let mut states = Vec::new();
    for c in 0..fold_cfg.chains as u64 {
        states.extend(run_chain(&train_spec, &fold_cfg, c, clock)?.states);
    }
    let (mu_hat, sigma2_hat) = predict(&states, &spec.subset(&test))?;
    Ok(FoldPrediction {
        fold: f,
        rows: test,
        mu_hat,
        sigma2_hat,
    })
}

/// Pooled MSEV over held-out rows of already fitted folds.
pub fn pool_folds(spec: &ModelSpec, folds: Vec<FoldPrediction>) -> Result<CvResult> {
    let mut y = Vec::new();
    let mut mu = Vec::new();
    let mut s2 = Vec::new();
    for f in &folds {
        y.extend(f.rows.iter().map(|&i| spec.response[i]));
        mu.extend_from_slice(&f.mu_hat);
        s2.extend_from_slice(&f.sigma2_hat);
    }
    let pooled_msev = msev(&y, &mu, &s2)?;
    Ok(CvResult { folds, pooled_msev })
}

/// Sequential k-fold cross-validation.
pub fn kfold_cv(
    spec: &ModelSpec,
    config: &GibbsConfig,
    scheme: &CvScheme,
    clock: &dyn Clock,
) -> Result<CvResult> {
    let folds = (0..scheme.folds)
        .map(|f| fit_fold(spec, config, scheme, f, clock))
        .collect::<Result<Vec<_>>>()?;
    pool_folds(spec, folds)
}

/// Posterior summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub ess: f64,
}

/// Quantile by linear interpolation of order statistics (`h = (n−1)p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Effective draw count from the initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let acf = |k: usize| -> f64 {
        (0..n - k)
            .map(|i| (x[i] - mean) * (x[i + k] - mean))
            .sum::<f64>()
            / n as f64
            / c0
    };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = acf(k) + acf(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * n as f64)
}

/// Mean, sd (divisor `n−1`), 2.5/50/97.5% quantiles and effective draw
/// count for one series of draws.
pub fn summarize_series(name: &str, draws: &[f64]) -> Result<ParamSummary> {
    let n = draws.len();
    if n == 0 {
        return Err(Error::Dimension(format!("no draws for `{name}`")));
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(ParamSummary {
        name: name.into(),
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        ess: effective_size(draws),
    })
}

/// Summaries of every flattened parameter, in `names` order.
pub fn summarize(states: &[ChainState], names: &[String], include_s: bool) -> Result<Vec<ParamSummary>> {
    if states.is_empty() {
        return Err(Error::Dimension("no posterior draws".into()));
    }
    let flat: Vec<Vec<f64>> = states.iter().map(|s| s.flatten(include_s)).collect();
    if flat[0].len() != names.len() {
        return Err(Error::Dimension(format!(
            "{} names for {} parameters",
            names.len(),
            flat[0].len()
        )));
    }
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let series: Vec<f64> = flat.iter().map(|r| r[j]).collect();
            summarize_series(name, &series)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Hyperparams;
    use alloc::vec;

    fn close(a: f64, b: f64) {
        assert!(((a - b) / b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn density_at_mode() {
        close(log_density(Likelihood::Gaussian, 0.0, 0.0, 1.0), -0.918_938_533_204_672_7);
        close(log_density(Likelihood::Laplace, 1.0, 1.0, 2.0), -core::f64::consts::LN_2);
    }

    #[test]
    fn waic_two_draws() {
        let ll = PointwiseLogLik {
            values: DMatrix::from_row_slice(2, 1, &[-1.0, -3.0]),
            mode: Likelihood::Gaussian,
        };
        let w = waic(&ll).unwrap();
        let lppd = (((-1.0f64).exp() + (-3.0f64).exp()) / 2.0).ln();
        close(w.lppd, lppd);
        close(w.p_waic, 2.0);
        close(w.waic, -2.0 * (lppd - 2.0));
        let single = PointwiseLogLik {
            values: DMatrix::from_row_slice(1, 1, &[-1.0]),
            mode: Likelihood::Gaussian,
        };
        assert!(waic(&single).is_err());
    }

    #[test]
    fn waic_survives_large_negative_values() {
        let ll = PointwiseLogLik {
            values: DMatrix::from_row_slice(2, 1, &[-2000.0, -2001.0]),
            mode: Likelihood::Gaussian,
        };
        assert!(waic(&ll).unwrap().waic.is_finite());
    }

    #[test]
    fn msev_cases() {
        assert_eq!(msev(&[1.0, -1.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(msev(&[2.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 5.0);
        assert_eq!(msev(&[0.0], &[0.0], &[0.0]).unwrap(), 0.0);
        assert!(msev(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn summary_basics() {
        let s = summarize_series("x", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.q50, 2.0);
        let c = summarize_series("c", &[4.0; 10]).unwrap();
        assert_eq!(c.sd, 0.0);
        assert_eq!((c.q025, c.q50, c.q975), (4.0, 4.0, 4.0));
    }

    #[test]
    fn ess_of_alternating_and_constant() {
        let iid: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(effective_size(&iid) >= 1000.0);
        assert_eq!(effective_size(&[2.0; 50]), 50.0);
    }

    #[test]
    fn cv_scheme_partitions() {
        let a = CvScheme::new(23, 5, 3).unwrap();
        assert_eq!(a, CvScheme::new(23, 5, 3).unwrap());
        let mut all: Vec<usize> = (0..5).flat_map(|f| a.test_rows(f)).collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!((0..5).all(|f| !a.test_rows(f).is_empty()));
        assert!(CvScheme::new(3, 5, 1).is_err());
    }

    #[test]
    fn fold_too_small_is_reported() {
        let n = 4;
        let spec = ModelSpec::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(n, 3, &[1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 1.0, 3.0, 0.0]),
            DMatrix::zeros(n, 0),
            DMatrix::from_element(n, 1, 1.0),
            DMatrix::zeros(n, 0),
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        let scheme = CvScheme::new(n, 2, 1).unwrap();
        let cfg = GibbsConfig {
            iterations: 10,
            burn_in: 5,
            ..GibbsConfig::default()
        };
        match fit_fold(&spec, &cfg, &scheme, 0, &crate::gibbs::NoClock) {
            Err(Error::FoldTooSmall { fold: 0, train: 2, needed: 4 }) => {}
            other => panic!("{other:?}"),
        }
    }
}
