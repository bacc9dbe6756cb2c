//! Echo-state reservoir and the volatility model built on its states.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::design::{BlockNames, ColumnScaling, Dataset, Hyperparams, Likelihood, ModelSpec};
use crate::error::{Error, Result};

/// Floor inside `log(y²_{t−1})`.
pub const LAG_EPSILON: f64 = 1e-12;

/// Default reservoir width.
pub const DEFAULT_HIDDEN: usize = 50;

/// Default lower truncation point of `1/σ_η`.
pub const DEFAULT_TRUNCATION: f64 = 7.0;

/// Fixed random recurrent weights `W` and input weights `U`, with `W`
/// rescaled to spectral radius `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub delta: f64,
    pub weight_sd: f64,
    pub seed: u64,
}

impl Reservoir {
    /// Rescales `w` so that its spectral radius equals `delta`.
    pub fn from_weights(w: DMatrix<f64>, u: DMatrix<f64>, delta: f64) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "recurrent weights must be square and nonempty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if u.nrows() != w.nrows() || u.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "input weights must be {}xp with p >= 1, got {}x{}",
                w.nrows(),
                u.nrows(),
                u.ncols()
            )));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
        }
        let radius = spectral_radius(&w)?;
        if !(radius > 0.0) {
            return Err(Error::Domain("recurrent weights have zero spectral radius".into()));
        }
        Ok(Self {
            w: w * (delta / radius),
            u,
            delta,
            weight_sd: f64::NAN,
            seed: 0,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.u.ncols()
    }
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(w: &DMatrix<f64>) -> Result<f64> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("recurrent weights".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(w.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence)?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max))
}

fn draw_weights(n_h: usize, p: usize, seed: u64, sd: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("validated sd");
    let w = DMatrix::from_fn(n_h, n_h, |_, _| normal.sample(&mut rng));
    let u = DMatrix::from_fn(n_h, p, |_, _| normal.sample(&mut rng));
    (w, u)
}

/// Offset used for the single retry when the eigenvalue solve fails.
const RETRY_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Draws `W`, `U` with `N(0, weight_sd²)` entries and scales `W` to
/// spectral radius `delta`.
pub fn build_reservoir(
    n_h: usize,
    p: usize,
    seed: u64,
    weight_sd: f64,
    delta: f64,
) -> Result<Reservoir> {
    if n_h == 0 || p == 0 {
        return Err(Error::Dimension(format!(
            "reservoir needs n_h >= 1 and p >= 1, got n_h = {n_h}, p = {p}"
        )));
    }
    if !(weight_sd.is_finite() && weight_sd > 0.0) {
        return Err(Error::Domain(format!("weight_sd must be positive, got {weight_sd}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    let mut last = Error::NoConvergence;
    for s in [seed, seed.wrapping_add(RETRY_SEED_OFFSET)] {
        let (w, u) = draw_weights(n_h, p, s, weight_sd);
        match Reservoir::from_weights(w, u, delta) {
            Ok(mut r) => {
                r.weight_sd = weight_sd;
                r.seed = seed;
                return Ok(r);
            }
            Err(e @ (Error::NoConvergence | Error::Domain(_))) => {
                last = e;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Hidden states `h_t = tanh(W h_{t−1} + U x_t)`, one row per input row.
pub fn reservoir_states(
    res: &Reservoir,
    x: &DMatrix<f64>,
    h0: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let n_h = res.hidden();
    if x.ncols() != res.inputs() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, reservoir expects {}",
            x.ncols(),
            res.inputs()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reservoir inputs".into()));
    }
    let mut h = match h0 {
        Some(h0) if h0.len() != n_h => {
            return Err(Error::Dimension(format!(
                "initial state has length {}, reservoir has {n_h}",
                h0.len()
            )))
        }
        Some(h0) => h0.clone(),
        None => DVector::zeros(n_h),
    };
    let mut out = DMatrix::zeros(x.nrows(), n_h);
    for t in 0..x.nrows() {
        let xt = x.row(t).transpose();
        h = (&res.w * &h + &res.u * xt).map(|v| v.tanh());
        out.row_mut(t).copy_from(&h.transpose());
    }
    Ok(out)
}

/// Rows `(1, log max(y²_{t−1}, ε), extra_t…)` for `t = 2…T`.
///
/// `extra`, when given, has `T` rows aligned with `returns`.
pub fn esvm_inputs(returns: &[f64], extra: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let t = returns.len();
    if t < 2 {
        return Err(Error::Dimension(format!("need at least two returns, got {t}")));
    }
    if returns.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("returns".into()));
    }
    let k = extra.map_or(0, |e| e.ncols());
    if let Some(e) = extra {
        if e.nrows() != t {
            return Err(Error::Dimension(format!(
                "extra inputs have {} rows, returns have {t}",
                e.nrows()
            )));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("extra inputs".into()));
        }
    }
    Ok(DMatrix::from_fn(t - 1, 2 + k, |i, j| match j {
        0 => 1.0,
        1 => {
            let y = returns[i];
            (y * y).max(LAG_EPSILON).ln()
        }
        _ => extra.expect("k > 0")[(i + 1, j - 2)],
    }))
}

/// Echo-state volatility model: constant mean, `−log σ²_t = h_t′η`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsvmSpec {
    pub reservoir: Reservoir,
    /// `(T−1) × p` input rows, intercept first.
    pub inputs: DMatrix<f64>,
    /// Prior variance of the constant mean.
    pub mean_prior_var: f64,
    pub hyper: Hyperparams,
}

impl EsvmSpec {
    pub fn new(
        reservoir: Reservoir,
        inputs: DMatrix<f64>,
        mean_prior_var: f64,
        hyper: Hyperparams,
    ) -> Result<Self> {
        if inputs.nrows() < 1 {
            return Err(Error::Dimension("ESVM needs at least one usable row".into()));
        }
        if inputs.ncols() != reservoir.inputs() {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, reservoir expects {}",
                inputs.ncols(),
                reservoir.inputs()
            )));
        }
        if !(mean_prior_var.is_finite() && mean_prior_var > 0.0) {
            return Err(Error::Domain(format!(
                "mean prior variance must be positive, got {mean_prior_var}"
            )));
        }
        hyper.validate()?;
        Ok(Self {
            reservoir,
            inputs,
            mean_prior_var,
            hyper,
        })
    }

    /// Default hyperparameters with the volatility truncation point.
    pub fn default_hyper() -> Hyperparams {
        Hyperparams {
            trunc_lower: DEFAULT_TRUNCATION,
            ..Hyperparams::default()
        }
    }
}

/// Non-intercept input columns centered and scaled.
pub fn standardize_inputs(inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<ColumnScaling>)> {
    let mut out = inputs.clone();
    let mut scaling = Vec::new();
    for j in 1..inputs.ncols() {
        let col: Vec<f64> = inputs.column(j).iter().copied().collect();
        let s = ColumnScaling::fit(&format!("input_{j}"), &col)?;
        for v in out.column_mut(j).iter_mut() {
            *v = s.apply(*v);
        }
        scaling.push(s);
    }
    Ok((out, scaling))
}

/// Model spec and dataset for the volatility model over `returns[1..]`.
///
/// The variance predictor is carried entirely by the reservoir states, so
/// `X2` has no columns.
pub fn esvm_to_gbhm(es: &EsvmSpec, returns: &[f64]) -> Result<(ModelSpec, Dataset)> {
    let t = returns.len();
    if t < 2 || es.inputs.nrows() != t - 1 {
        return Err(Error::Dimension(format!(
            "{} input rows for {t} returns; expected {}",
            es.inputs.nrows(),
            t.saturating_sub(1)
        )));
    }
    let (scaled, scaling) = standardize_inputs(&es.inputs)?;
    let states = reservoir_states(&es.reservoir, &scaled, None)?;
    let y: Vec<f64> = returns[1..].to_vec();
    let n = y.len();
    let hyper = Hyperparams {
        sigma2_beta1: es.mean_prior_var,
        ..es.hyper
    };
    let mut spec = ModelSpec::new_random_variance(
        DVector::from_vec(y.clone()),
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::zeros(n, 0),
        states,
        Likelihood::Gaussian,
        hyper,
    )?;
    let names = BlockNames {
        x1: alloc::vec!["mu".into()],
        psi1: Vec::new(),
        x2: Vec::new(),
        psi2: (1..=es.reservoir.hidden()).map(|i| format!("h_{i}")).collect(),
    };
    spec = spec.with_names(names)?;
    spec.scaling = scaling;
    let dataset = Dataset::new("return", y)?.with_time_index((2..=t).map(|i| i as f64).collect())?;
    Ok((spec, dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn diagonal_weights_scale_exactly() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, -2.0, 1.0]));
        let u = DMatrix::from_element(3, 1, 1.0);
        let r = Reservoir::from_weights(w, u, 0.1).unwrap();
        assert!((r.w[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((r.w[(1, 1)] + 0.04).abs() < 1e-15);
        assert!((spectral_radius(&r.w).unwrap() - 0.1).abs() < 1e-10);
    }

    #[test]
    fn rotation_has_complex_dominant_pair() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
        assert!((spectral_radius(&w).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reservoir_is_seeded_and_scaled() {
        let a = build_reservoir(50, 2, 11, 0.1, 0.1).unwrap();
        let b = build_reservoir(50, 2, 11, 0.1, 0.1).unwrap();
        assert_eq!(a, b);
        assert!((spectral_radius(&a.w).unwrap() - 0.1).abs() < 1e-10);
        assert_ne!(a.w, build_reservoir(50, 2, 12, 0.1, 0.1).unwrap().w);
        assert!(build_reservoir(0, 2, 1, 0.1, 0.1).is_err());
        assert!(build_reservoir(3, 2, 1, 0.1, 1.5).is_err());
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let r = Reservoir {
            w: DMatrix::zeros(3, 3),
            u: DMatrix::zeros(3, 2),
            delta: 0.1,
            weight_sd: 0.1,
            seed: 0,
        };
        let x = DMatrix::from_element(4, 2, 3.0);
        assert!(reservoir_states(&r, &x, None).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lag_features() {
        let x = esvm_inputs(&[0.0, 1.0, -2.0], None).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert!((x[(0, 1)] - LAG_EPSILON.ln()).abs() < 1e-12);
        assert_eq!(x[(1, 1)], 0.0);
        let extra = DMatrix::from_column_slice(3, 1, &[10.0, 20.0, 30.0]);
        let x = esvm_inputs(&[0.5, 1.0, -2.0], Some(&extra)).unwrap();
        assert_eq!(x[(0, 2)], 20.0);
        assert_eq!(x[(1, 2)], 30.0);
        assert!(esvm_inputs(&[1.0], None).is_err());
        assert!(esvm_inputs(&[1.0, f64::NAN], None).is_err());
    }

    #[test]
    fn gbhm_reduction_shapes() {
        let returns: Vec<f64> = (0..30).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let inputs = esvm_inputs(&returns, None).unwrap();
        let res = build_reservoir(8, 2, 3, 0.1, 0.1).unwrap();
        let es = EsvmSpec::new(res, inputs, 10.0, EsvmSpec::default_hyper()).unwrap();
        let (spec, data) = esvm_to_gbhm(&es, &returns).unwrap();
        assert_eq!(spec.psi2.shape(), (29, 8));
        assert_eq!(spec.p2(), 0);
        assert_eq!(spec.hyper.trunc_lower, 7.0);
        assert_eq!(spec.hyper.sigma2_beta1, 10.0);
        assert_eq!(data.nrows(), 29);
        assert!(spec.psi2.iter().all(|v| v.abs() < 1.0));
    }
}
