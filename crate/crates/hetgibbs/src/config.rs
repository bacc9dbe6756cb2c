//! TOML run configuration. Unknown keys are rejected.
//!
//! ```toml
//! [data]
//! path = "soil.csv"
//! response = "y"
//! coords = ["lon", "lat"]      # optional
//! time = "t"                   # optional
//!
//! [model]
//! likelihood = "gaussian"      # or "laplace"
//! mean = ["temp", "factor(order)"]
//! variance = ["order"]
//! mean_basis = [2, 3]          # grid resolutions; omit for no basis
//! variance_basis = [2]
//!
//! [priors]                     # every key optional
//! sigma2_beta1 = 1000.0
//! sigma2_beta2 = 1000.0
//! alpha = 1000.0
//! a = 0.5
//! b = 0.5
//! omega = 1000.0
//! rho = 1000.0
//! trunc_lower = 0.0
//!
//! [mcmc]
//! iterations = 5000
//! burn_in = 1000
//! thin = 1
//! seed = 1
//! chains = 1
//! truncation_attempts = 1000
//! tail_fallback = true
//!
//! [esvm]                       # replaces [model] when enabled
//! enabled = true
//! hidden = 50
//! delta = 0.1
//! weight_sd = 0.1
//! c = 7.0
//! lag_feature = true
//! extra = ["vix"]
//! mean_prior_var = 1000.0
//! reservoir_seed = 1
//!
//! [cv]
//! folds = 5
//! seed = 1
//!
//! [output]
//! dir = "out"
//! store_s = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hetgibbs_core::design::{BasisConfig, Hyperparams, Likelihood, Term};
use hetgibbs_core::esvm::{DEFAULT_HIDDEN, DEFAULT_TRUNCATION};
use hetgibbs_core::gibbs::{GibbsConfig, TruncationPolicy};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub priors: PriorSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub esvm: EsvmSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_likelihood")]
    pub likelihood: String,
    #[serde(default)]
    pub mean: Vec<String>,
    #[serde(default)]
    pub variance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_basis: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_basis: Option<Vec<usize>>,
}

fn default_likelihood() -> String {
    "gaussian".into()
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            likelihood: default_likelihood(),
            mean: Vec::new(),
            variance: Vec::new(),
            mean_basis: None,
            variance_basis: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub sigma2_beta1: Option<f64>,
    pub sigma2_beta2: Option<f64>,
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub omega: Option<f64>,
    pub rho: Option<f64>,
    pub trunc_lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub truncation_attempts: usize,
    pub tail_fallback: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        let g = GibbsConfig::default();
        Self {
            iterations: g.iterations,
            burn_in: g.burn_in,
            thin: g.thin,
            seed: g.seed,
            chains: g.chains,
            truncation_attempts: g.truncation.max_attempts,
            tail_fallback: g.truncation.tail_fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsvmSection {
    pub enabled: bool,
    pub hidden: usize,
    pub delta: f64,
    pub weight_sd: f64,
    pub c: f64,
    pub lag_feature: bool,
    pub extra: Vec<String>,
    pub mean_prior_var: f64,
    pub reservoir_seed: u64,
}

impl Default for EsvmSection {
    fn default() -> Self {
        Self {
            enabled: false,
            hidden: DEFAULT_HIDDEN,
            delta: 0.1,
            weight_sd: 0.1,
            c: DEFAULT_TRUNCATION,
            lag_feature: true,
            extra: Vec::new(),
            mean_prior_var: 1000.0,
            reservoir_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { folds: 5, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub store_s: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("hetgibbs-out"),
            store_s: false,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub output: Option<PathBuf>,
}

impl FitConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml {
            path: origin.to_path_buf(),
            source,
        })
    }

    /// Reads a config file; a relative data path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.mcmc.seed = v;
        }
        if let Some(v) = o.chains {
            self.mcmc.chains = v;
        }
        if let Some(v) = o.iterations {
            self.mcmc.iterations = v;
        }
        if let Some(v) = o.burn_in {
            self.mcmc.burn_in = v;
        }
        if let Some(v) = o.thin {
            self.mcmc.thin = v;
        }
        if let Some(v) = &o.output {
            self.output.dir = v.clone();
        }
    }

    /// Fully resolved config as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn likelihood(&self) -> Result<Likelihood> {
        Ok(Likelihood::parse(&self.model.likelihood)?)
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let d = Hyperparams::default();
        let p = &self.priors;
        let esvm_c = self.esvm.enabled.then_some(self.esvm.c);
        Hyperparams {
            sigma2_beta1: p.sigma2_beta1.unwrap_or(d.sigma2_beta1),
            sigma2_beta2: p.sigma2_beta2.unwrap_or(d.sigma2_beta2),
            alpha: p.alpha.unwrap_or(d.alpha),
            a: p.a.unwrap_or(d.a),
            b: p.b.unwrap_or(d.b),
            omega: p.omega.unwrap_or(d.omega),
            rho: p.rho.unwrap_or(d.rho),
            trunc_lower: p.trunc_lower.or(esvm_c).unwrap_or(d.trunc_lower),
        }
    }

    pub fn gibbs(&self) -> GibbsConfig {
        let m = &self.mcmc;
        GibbsConfig {
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            seed: m.seed,
            chains: m.chains,
            truncation: TruncationPolicy {
                max_attempts: m.truncation_attempts,
                tail_fallback: m.tail_fallback,
            },
            fault: None,
        }
    }

    pub fn mean_terms(&self) -> Result<Vec<Term>> {
        parse_terms(&self.model.mean)
    }

    pub fn variance_terms(&self) -> Result<Vec<Term>> {
        parse_terms(&self.model.variance)
    }

    pub fn mean_basis(&self) -> Option<BasisConfig> {
        grid(&self.model.mean_basis)
    }

    pub fn variance_basis(&self) -> Option<BasisConfig> {
        grid(&self.model.variance_basis)
    }

    /// Columns the data file must provide beyond the response.
    pub fn referenced_columns(&self) -> Result<Vec<String>> {
        let mut cols: Vec<String> = Vec::new();
        if self.esvm.enabled {
            cols.extend(self.esvm.extra.iter().cloned());
        } else {
            for t in self.mean_terms()?.iter().chain(&self.variance_terms()?) {
                if !cols.iter().any(|c| c == t.name()) {
                    cols.push(t.name().to_string());
                }
            }
        }
        Ok(cols)
    }
}

fn parse_terms(raw: &[String]) -> Result<Vec<Term>> {
    raw.iter()
        .map(|s| Term::parse(s).map_err(Error::from))
        .collect()
}

fn grid(r: &Option<Vec<usize>>) -> Option<BasisConfig> {
    r.as_ref().map(|res| BasisConfig::Grid {
        resolutions: res.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\npath = \"d.csv\"\nresponse = \"y\"\n";

    #[test]
    fn defaults_fill_in() {
        let c = FitConfig::from_toml(MINIMAL, Path::new("x.toml")).unwrap();
        assert_eq!(c.mcmc.iterations, 5000);
        assert_eq!(c.mcmc.burn_in, 1000);
        assert_eq!(c.hyperparams(), Hyperparams::default());
        assert_eq!(c.cv.folds, 5);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{MINIMAL}[mcmc]\niteratoins = 10\n");
        let err = FitConfig::from_toml(&text, Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("iteratoins"), "{err}");
        assert!(FitConfig::from_toml("[dta]\n", Path::new("x.toml")).is_err());
    }

    #[test]
    fn esvm_sets_truncation() {
        let text = format!("{MINIMAL}[esvm]\nenabled = true\n");
        let c = FitConfig::from_toml(&text, Path::new("x.toml")).unwrap();
        assert_eq!(c.hyperparams().trunc_lower, 7.0);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = FitConfig::from_toml(MINIMAL, Path::new("x.toml")).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            thin: Some(2),
            ..Overrides::default()
        });
        let back = FitConfig::from_toml(&c.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.mcmc.seed, 9);
    }
}
