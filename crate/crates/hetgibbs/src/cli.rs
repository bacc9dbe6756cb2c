//! Subcommands `fit`, `cv`, `validate` and `simulate`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hetgibbs_core::design::{build_design, Column, Likelihood, ModelSpec};
use hetgibbs_core::esvm::{build_reservoir, esvm_inputs, esvm_to_gbhm, EsvmSpec};
use hetgibbs_core::evaluation::{dic, loglik_pointwise, summarize, waic, CvScheme};
use hetgibbs_core::gibbs::{parameter_names, ChainState};
use hetgibbs_core::DMatrix;

use crate::chainfile::{chain_paths, write_chain_csv, ChainMeta};
use crate::config::{FitConfig, Overrides};
use crate::error::{Error, Result};
use crate::io::{format_number, load_csv, write_commented_csv, LoadReport, Selection};
use crate::oracle::{generate_synthetic, SyntheticShape};
use crate::run::{run_chains, run_cv};
use crate::validate::{run_suite, SuiteReport, SUITES};

#[derive(Debug, Parser)]
#[command(name = "hetgibbs", version, about = "Gibbs sampling for heteroskedastic hierarchical models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides accepted by every subcommand.
#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long = "burn-in", global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            chains: self.chains,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            output: self.out.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write chains, a posterior summary and DIC/WAIC.
    Fit {
        config: PathBuf,
    },
    /// k-fold cross-validation with pooled MSEV.
    Cv {
        config: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Run validation suites and write a JSON report.
    Validate {
        /// Suite name or `all`.
        #[arg(default_value = "all")]
        suite: String,
        /// Report path; defaults to `<out>/validation.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a synthetic dataset and its generating coefficients.
    Simulate {
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Mean coefficients, intercept first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.0, 2.0])]
        beta1: Vec<f64>,
        /// Precision-link coefficients, intercept first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.5, -0.8])]
        beta2: Vec<f64>,
        #[arg(long, default_value = "gaussian")]
        likelihood: String,
    },
}

/// Parses arguments, runs, and maps errors to a diagnostic and exit code 1.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!(": {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

/// Runs a parsed command; `Ok(false)` means a validation check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Fit { config } => {
            let cfg = resolve(config, &cli.global)?;
            cmd_fit(&cfg)?;
            Ok(true)
        }
        Command::Cv { config, folds } => {
            let mut cfg = resolve(config, &cli.global)?;
            if let Some(k) = folds {
                cfg.cv.folds = *k;
            }
            cmd_cv(&cfg)?;
            Ok(true)
        }
        Command::Validate { suite, report } => {
            let seed = cli.global.seed.unwrap_or(1);
            let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let path = report.clone().unwrap_or_else(|| out.join("validation.json"));
            cmd_validate(suite, seed, &path)
        }
        Command::Simulate {
            n,
            beta1,
            beta2,
            likelihood,
        } => {
            let out = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let shape = SyntheticShape {
                n: *n,
                p1: beta1.len(),
                p2: beta2.len(),
                likelihood: Likelihood::parse(likelihood)?,
            };
            cmd_simulate(shape, beta1, beta2, cli.global.seed.unwrap_or(1), &out)?;
            Ok(true)
        }
    }
}

fn resolve(path: &Path, global: &GlobalArgs) -> Result<FitConfig> {
    let mut cfg = FitConfig::load(path)?;
    cfg.apply(&global.overrides());
    Ok(cfg)
}

fn provenance(cfg: &FitConfig) -> String {
    format!(
        "hetgibbs {} resolved configuration (seed {})\n\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.mcmc.seed,
        cfg.to_toml()
    )
}

fn config_table(cfg: &FitConfig) -> toml::Table {
    toml::from_str(&cfg.to_toml()).expect("resolved config parses")
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-test");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

/// Loads the data file and builds the model the config describes.
pub fn build_model(cfg: &FitConfig) -> Result<(ModelSpec, LoadReport)> {
    let hyper = cfg.hyperparams();
    if cfg.esvm.enabled {
        let sel = Selection {
            response: cfg.data.response.clone(),
            columns: cfg.esvm.extra.clone(),
            coords: None,
            time: cfg.data.time.clone(),
        };
        let report = load_csv(&cfg.data.path, &sel)?;
        let ds = &report.dataset;
        let t = ds.nrows();
        let extra = if cfg.esvm.extra.is_empty() {
            None
        } else {
            let mut m = DMatrix::zeros(t, cfg.esvm.extra.len());
            for (j, name) in cfg.esvm.extra.iter().enumerate() {
                match ds.column(name) {
                    Some(Column::Numeric(v)) => m.column_mut(j).copy_from_slice(v),
                    _ => {
                        return Err(Error::Config(format!(
                            "ESVM input column `{name}` must be numeric"
                        )))
                    }
                }
            }
            Some(m)
        };
        let mut inputs = esvm_inputs(ds.y(), extra.as_ref())?;
        if !cfg.esvm.lag_feature {
            inputs = inputs.remove_column(1);
        }
        let reservoir = build_reservoir(
            cfg.esvm.hidden,
            inputs.ncols(),
            cfg.esvm.reservoir_seed,
            cfg.esvm.weight_sd,
            cfg.esvm.delta,
        )?;
        let es = EsvmSpec::new(reservoir, inputs, cfg.esvm.mean_prior_var, hyper)?;
        let (spec, _) = esvm_to_gbhm(&es, ds.y())?;
        Ok((spec, report))
    } else {
        let sel = Selection {
            response: cfg.data.response.clone(),
            columns: cfg.referenced_columns()?,
            coords: cfg.data.coords.clone(),
            time: cfg.data.time.clone(),
        };
        let report = load_csv(&cfg.data.path, &sel)?;
        let spec = build_design(
            &report.dataset,
            &cfg.mean_terms()?,
            &cfg.variance_terms()?,
            cfg.mean_basis().as_ref(),
            cfg.variance_basis().as_ref(),
            cfg.likelihood()?,
            hyper,
        )?;
        Ok((spec, report))
    }
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    metrics: FitMetrics,
    config: toml::Table,
}

#[derive(Debug, Serialize)]
struct FitMetrics {
    seed: u64,
    chains: usize,
    draws: usize,
    rows_read: usize,
    rows_dropped: usize,
    dic: f64,
    p_dic: f64,
    dic_degenerate: bool,
    waic: f64,
    lppd: f64,
    p_waic: f64,
}

/// Writes `chain_<k>.csv`, `chain_<k>.meta.toml`, `summary.csv` and
/// `metrics.toml` into the output directory.
pub fn cmd_fit(cfg: &FitConfig) -> Result<()> {
    let out = &cfg.output.dir;
    prepare_output(out)?;
    let (spec, report) = build_model(cfg)?;
    if report.rows_dropped > 0 {
        eprintln!(
            "dropped {} of {} rows with missing values",
            report.rows_dropped, report.rows_read
        );
    }
    let gibbs = cfg.gibbs();
    let chains = run_chains(&spec, &gibbs)?;
    let store_s = cfg.output.store_s && spec.likelihood == Likelihood::Laplace;
    let names = parameter_names(&spec, store_s);
    let preamble = provenance(cfg);
    let table = config_table(cfg);
    let mut pooled: Vec<ChainState> = Vec::new();
    for tc in &chains {
        let (csv_path, meta_path) = chain_paths(out, tc.chain.chain_index);
        let rows: Vec<Vec<f64>> = tc.chain.states.iter().map(|s| s.flatten(store_s)).collect();
        write_chain_csv(&csv_path, &preamble, &names, &rows)?;
        ChainMeta::new(&tc.chain, tc.elapsed_seconds, table.clone()).write(&meta_path)?;
        pooled.extend(tc.chain.states.iter().cloned());
    }

    let summary = summarize(&pooled, &names, store_s)?;
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|p| {
            let mut r = vec![p.name.clone()];
            r.extend([p.mean, p.sd, p.q025, p.q50, p.q975, p.ess].map(format_number));
            r
        })
        .collect();
    write_commented_csv(
        out.join("summary.csv"),
        &preamble,
        &["parameter", "mean", "sd", "q025", "q50", "q975", "ess"],
        &rows,
    )?;

    let ll = loglik_pointwise(&pooled, &spec)?;
    let d = dic(&ll, &pooled, &spec)?;
    let w = waic(&ll)?;
    let metrics = MetricsFile {
        metrics: FitMetrics {
            seed: cfg.mcmc.seed,
            chains: chains.len(),
            draws: pooled.len(),
            rows_read: report.rows_read,
            rows_dropped: report.rows_dropped,
            dic: d.dic,
            p_dic: d.p_dic,
            dic_degenerate: d.degenerate,
            waic: w.waic,
            lppd: w.lppd,
            p_waic: w.p_waic,
        },
        config: table,
    };
    let path = out.join("metrics.toml");
    let text = toml::to_string(&metrics).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!(
        "fit: {} chains x {} draws, DIC {:.4}, WAIC {:.4}; outputs in {}",
        chains.len(),
        pooled.len() / chains.len().max(1),
        d.dic,
        w.waic,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CvFile {
    cv: CvMetrics,
    config: toml::Table,
}

#[derive(Debug, Serialize)]
struct CvMetrics {
    folds: usize,
    seed: u64,
    pooled_msev: f64,
}

/// Writes `cv_predictions.csv` and `cv_metrics.toml`.
pub fn cmd_cv(cfg: &FitConfig) -> Result<()> {
    let out = &cfg.output.dir;
    prepare_output(out)?;
    let (spec, _) = build_model(cfg)?;
    let scheme = CvScheme::new(spec.n(), cfg.cv.folds, cfg.cv.seed)?;
    let result = run_cv(&spec, &cfg.gibbs(), &scheme)?;
    let mut rows = Vec::new();
    for f in &result.folds {
        for (k, &i) in f.rows.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                f.fold.to_string(),
                format_number(spec.response[i]),
                format_number(f.mu_hat[k]),
                format_number(f.sigma2_hat[k]),
            ]);
        }
    }
    rows.sort_by_key(|r| r[0].parse::<usize>().unwrap_or(usize::MAX));
    let preamble = provenance(cfg);
    write_commented_csv(
        out.join("cv_predictions.csv"),
        &preamble,
        &["row", "fold", "y", "mu_hat", "sigma2_hat"],
        &rows,
    )?;
    let file = CvFile {
        cv: CvMetrics {
            folds: cfg.cv.folds,
            seed: cfg.cv.seed,
            pooled_msev: result.pooled_msev,
        },
        config: config_table(cfg),
    };
    let path = out.join("cv_metrics.toml");
    let text = toml::to_string(&file).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("cv: {} folds, pooled MSEV {:.6}", cfg.cv.folds, result.pooled_msev);
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidationFile<'a> {
    seed: u64,
    passed: bool,
    suites: &'a [SuiteReport],
}

/// Runs the named suite (or all of them) and writes a JSON report.
pub fn cmd_validate(suite: &str, seed: u64, report: &Path) -> Result<bool> {
    let names: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        vec![suite]
    };
    let mut reports = Vec::new();
    for name in names {
        let r = run_suite(name, seed)?;
        println!("{}", r.line());
        reports.push(r);
    }
    let passed = reports.iter().all(SuiteReport::passed);
    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_output(dir)?;
    }
    let file = ValidationFile {
        seed,
        passed,
        suites: &reports,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::format(report, e.to_string()))?;
    fs::write(report, text).map_err(|e| Error::io(report, e))?;
    Ok(passed)
}

#[derive(Debug, Serialize)]
struct TruthFile {
    seed: u64,
    n: usize,
    likelihood: String,
    beta1: Vec<f64>,
    beta2: Vec<f64>,
    mean_columns: Vec<String>,
    variance_columns: Vec<String>,
}

/// Writes `data.csv` and `truth.toml`.
pub fn cmd_simulate(
    shape: SyntheticShape,
    beta1: &[f64],
    beta2: &[f64],
    seed: u64,
    out: &Path,
) -> Result<()> {
    prepare_output(out)?;
    let data = generate_synthetic(shape, beta1, beta2, seed)?;
    let ds = &data.dataset;
    let cols: Vec<String> = ds.column_names().map(str::to_string).collect();
    let truth = TruthFile {
        seed,
        n: shape.n,
        likelihood: shape.likelihood.name().to_string(),
        beta1: beta1.to_vec(),
        beta2: beta2.to_vec(),
        mean_columns: cols.iter().filter(|c| c.starts_with("x1_")).cloned().collect(),
        variance_columns: cols.iter().filter(|c| c.starts_with("x2_")).cloned().collect(),
    };
    let truth_text = toml::to_string(&truth).map_err(|e| Error::format(out, e.to_string()))?;
    let mut header = vec![ds.response_name()];
    header.extend(cols.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..ds.nrows())
        .map(|i| {
            let mut r = vec![format_number(ds.y()[i])];
            for c in &cols {
                if let Some(Column::Numeric(v)) = ds.column(c) {
                    r.push(format_number(v[i]));
                }
            }
            r
        })
        .collect();
    write_commented_csv(out.join("data.csv"), &truth_text, &header, &rows)?;
    let path = out.join("truth.toml");
    fs::write(&path, truth_text).map_err(|e| Error::io(&path, e))?;
    println!("simulate: {} rows written to {}", shape.n, out.display());
    Ok(())
}
