//! Model specification: response, mean and variance design blocks,
//! hyperparameters, and the bisquare spatial basis.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Observation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Likelihood {
    Gaussian,
    /// Laplace data through an exponential scale mixture of Normals.
    Laplace,
}

impl Likelihood {
    pub fn name(self) -> &'static str {
        match self {
            Likelihood::Gaussian => "gaussian",
            Likelihood::Laplace => "laplace",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Likelihood::Gaussian),
            "laplace" => Ok(Likelihood::Laplace),
            other => Err(Error::Config(format!("unknown likelihood `{other}`"))),
        }
    }
}

/// Prior hyperparameters.
///
/// `trunc_lower` is the lower truncation point for `1/σ_{η₂}`: zero for the
/// general model, `c` for the echo-state volatility model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub sigma2_beta1: f64,
    pub sigma2_beta2: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub rho: f64,
    pub trunc_lower: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            sigma2_beta1: 1000.0,
            sigma2_beta2: 1000.0,
            alpha: 1000.0,
            a: 0.5,
            b: 0.5,
            omega: 1000.0,
            rho: 1000.0,
            trunc_lower: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2_beta1", self.sigma2_beta1),
            ("sigma2_beta2", self.sigma2_beta2),
            ("alpha", self.alpha),
            ("a", self.a),
            ("b", self.b),
            ("omega", self.omega),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.trunc_lower.is_finite() && self.trunc_lower >= 0.0) {
            return Err(Error::Domain(format!(
                "trunc_lower must be finite and nonnegative, got {}",
                self.trunc_lower
            )));
        }
        Ok(())
    }
}

/// A covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => {
                Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

/// Response plus named covariates, with optional locations and time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response_name: String,
    y: Vec<f64>,
    columns: Vec<(String, Column)>,
    coords: Option<Vec<[f64; 2]>>,
    time_index: Option<Vec<f64>>,
    dropped_rows: usize,
}

impl Dataset {
    pub fn new(response_name: impl Into<String>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Dimension("dataset has no rows".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        Ok(Self {
            response_name: response_name.into(),
            y,
            columns: Vec::new(),
            coords: None,
            time_index: None,
            dropped_rows: 0,
        })
    }

    pub fn with_column(mut self, name: impl Into<String>, column: Column) -> Result<Self> {
        let name = name.into();
        if column.len() != self.y.len() {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, response has {}",
                column.len(),
                self.y.len()
            )));
        }
        if let Column::Numeric(v) = &column {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("column `{name}`")));
            }
        }
        match self.columns.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = column,
            None => self.columns.push((name, column)),
        }
        Ok(self)
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.y.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} rows",
                coords.len(),
                self.y.len()
            )));
        }
        if coords.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coordinates".into()));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_time_index(mut self, index: Vec<f64>) -> Result<Self> {
        if index.len() != self.y.len() {
            return Err(Error::Dimension("time index length differs from response".into()));
        }
        if index.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("time index must be strictly increasing".into()));
        }
        self.time_index = Some(index);
        Ok(self)
    }

    /// Records how many raw rows were discarded for missing values at load time.
    pub fn with_dropped_rows(mut self, dropped: usize) -> Self {
        self.dropped_rows = dropped;
        self
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn time_index(&self) -> Option<&[f64]> {
        self.time_index.as_deref()
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            response_name: self.response_name.clone(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(rows)))
                .collect(),
            coords: self
                .coords
                .as_ref()
                .map(|c| rows.iter().map(|&i| c[i]).collect()),
            time_index: self
                .time_index
                .as_ref()
                .map(|t| rows.iter().map(|&i| t[i]).collect()),
            dropped_rows: self.dropped_rows,
        }
    }
}

/// A formula term: a column name, optionally forced to be categorical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// Numeric columns enter standardized, text columns as indicators.
    Auto(String),
    /// Treatment-coded indicators even for numeric codes.
    Categorical(String),
}

impl Term {
    /// Parses `name` or `factor(name)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("factor(").and_then(|r| r.strip_suffix(')')) {
            let inner = inner.trim();
            if inner.is_empty() {
                return Err(Error::Config(format!("empty factor term `{s}`")));
            }
            return Ok(Term::Categorical(inner.to_string()));
        }
        if s.is_empty() {
            return Err(Error::Config("empty term".into()));
        }
        Ok(Term::Auto(s.to_string()))
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Auto(n) | Term::Categorical(n) => n,
        }
    }
}

impl core::fmt::Display for Term {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Term::Auto(n) => f.write_str(n),
            Term::Categorical(n) => write!(f, "factor({n})"),
        }
    }
}

/// How to build a bisquare random-effects block.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisConfig {
    /// Regular grids over the expanded coordinate bounding box.
    Grid { resolutions: Vec<usize> },
    Explicit {
        centers: Vec<[f64; 2]>,
        radii: Vec<f64>,
    },
}

/// Centering and scaling applied to a continuous covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaling {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScaling {
    pub fn fit(name: &str, values: &[f64]) -> Result<Self> {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        let sd = if values.len() > 1 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            mean,
            sd,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Column labels of the four design blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockNames {
    pub x1: Vec<String>,
    pub psi1: Vec<String>,
    pub x2: Vec<String>,
    pub psi2: Vec<String>,
}

/// Everything the sampler needs: response, design blocks, priors, likelihood.
///
/// Mean: `μ = X1 β1 + Ψ1 η1`. Variance: `−log σ² = X2 β2 + Ψ2 η2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub response: DVector<f64>,
    pub x1: DMatrix<f64>,
    pub psi1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
    pub likelihood: Likelihood,
    pub hyper: Hyperparams,
    pub names: BlockNames,
    pub scaling: Vec<ColumnScaling>,
}

fn default_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

impl ModelSpec {
    /// Validated spec with at least an intercept-sized block in `X1` and `X2`.
    pub fn new(
        response: DVector<f64>,
        x1: DMatrix<f64>,
        psi1: DMatrix<f64>,
        x2: DMatrix<f64>,
        psi2: DMatrix<f64>,
        likelihood: Likelihood,
        hyper: Hyperparams,
    ) -> Result<Self> {
        if x2.ncols() == 0 {
            return Err(Error::Dimension(
                "variance fixed-effects block needs at least one column".into(),
            ));
        }
        Self::assemble(response, x1, psi1, x2, psi2, likelihood, hyper)
    }

    /// Spec whose variance predictor is carried entirely by `Ψ2` (no `X2`).
    pub fn new_random_variance(
        response: DVector<f64>,
        x1: DMatrix<f64>,
        psi1: DMatrix<f64>,
        psi2: DMatrix<f64>,
        likelihood: Likelihood,
        hyper: Hyperparams,
    ) -> Result<Self> {
        if psi2.ncols() == 0 {
            return Err(Error::Dimension(
                "variance needs at least one random-effect column when X2 is empty".into(),
            ));
        }
        let n = response.len();
        Self::assemble(
            response,
            x1,
            psi1,
            DMatrix::zeros(n, 0),
            psi2,
            likelihood,
            hyper,
        )
    }

    fn assemble(
        response: DVector<f64>,
        x1: DMatrix<f64>,
        psi1: DMatrix<f64>,
        x2: DMatrix<f64>,
        psi2: DMatrix<f64>,
        likelihood: Likelihood,
        hyper: Hyperparams,
    ) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::Dimension("no observations".into()));
        }
        if x1.ncols() == 0 {
            return Err(Error::Dimension(
                "mean fixed-effects block needs at least one column".into(),
            ));
        }
        for (name, m) in [("X1", &x1), ("Psi1", &psi1), ("X2", &x2), ("Psi2", &psi2)] {
            if m.nrows() != n {
                return Err(Error::Dimension(format!(
                    "{name} has {} rows, response has {n}",
                    m.nrows()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name.to_string()));
            }
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        hyper.validate()?;
        let names = BlockNames {
            x1: default_names("x1_", x1.ncols()),
            psi1: default_names("psi1_", psi1.ncols()),
            x2: default_names("x2_", x2.ncols()),
            psi2: default_names("psi2_", psi2.ncols()),
        };
        Ok(Self {
            response,
            x1,
            psi1,
            x2,
            psi2,
            likelihood,
            hyper,
            names,
            scaling: Vec::new(),
        })
    }

    pub fn with_names(mut self, names: BlockNames) -> Result<Self> {
        if names.x1.len() != self.p1()
            || names.psi1.len() != self.r1()
            || names.x2.len() != self.p2()
            || names.psi2.len() != self.r2()
        {
            return Err(Error::Dimension("block names do not match block widths".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }
    pub fn p1(&self) -> usize {
        self.x1.ncols()
    }
    pub fn r1(&self) -> usize {
        self.psi1.ncols()
    }
    pub fn p2(&self) -> usize {
        self.x2.ncols()
    }
    pub fn r2(&self) -> usize {
        self.psi2.ncols()
    }

    /// `X1 β1 + Ψ1 η1`.
    pub fn mean(&self, beta1: &DVector<f64>, eta1: &DVector<f64>) -> DVector<f64> {
        let mut mu = &self.x1 * beta1;
        if self.r1() > 0 {
            mu += &self.psi1 * eta1;
        }
        mu
    }

    /// `X2 β2 + Ψ2 η2`, the negative log-variance.
    pub fn neg_log_variance(&self, beta2: &DVector<f64>, eta2: &DVector<f64>) -> DVector<f64> {
        let mut lin = DVector::zeros(self.n());
        if self.p2() > 0 {
            lin += &self.x2 * beta2;
        }
        if self.r2() > 0 {
            lin += &self.psi2 * eta2;
        }
        lin
    }

    /// Restriction to the given observation rows.
    pub fn subset(&self, rows: &[usize]) -> ModelSpec {
        let pick = |m: &DMatrix<f64>| m.select_rows(rows.iter());
        ModelSpec {
            response: self.response.select_rows(rows.iter()),
            x1: pick(&self.x1),
            psi1: pick(&self.psi1),
            x2: pick(&self.x2),
            psi2: pick(&self.psi2),
            likelihood: self.likelihood,
            hyper: self.hyper,
            names: self.names.clone(),
            scaling: self.scaling.clone(),
        }
    }
}

struct BlockBuilder<'a> {
    dataset: &'a Dataset,
    scaling: Vec<ColumnScaling>,
}

impl BlockBuilder<'_> {
    fn scaling_for(&mut self, name: &str, values: &[f64]) -> Result<ColumnScaling> {
        if let Some(s) = self.scaling.iter().find(|s| s.name == name) {
            return Ok(s.clone());
        }
        let s = ColumnScaling::fit(name, values)?;
        self.scaling.push(s.clone());
        Ok(s)
    }

    fn fixed_block(&mut self, terms: &[Term]) -> Result<(DMatrix<f64>, Vec<String>)> {
        let n = self.dataset.nrows();
        let mut cols: Vec<Vec<f64>> = alloc::vec![alloc::vec![1.0; n]];
        let mut names: Vec<String> = alloc::vec!["(Intercept)".to_string()];
        for term in terms {
            let column = self
                .dataset
                .column(term.name())
                .ok_or_else(|| Error::UnknownColumn(term.name().to_string()))?;
            match (term, column) {
                (Term::Auto(name), Column::Numeric(v)) => {
                    let s = self.scaling_for(name, v)?;
                    cols.push(v.iter().map(|&x| s.apply(x)).collect());
                    names.push(name.clone());
                }
                (Term::Auto(name), Column::Categorical(v)) => {
                    indicators(name, v, &mut cols, &mut names)?;
                }
                (Term::Categorical(name), Column::Categorical(v)) => {
                    indicators(name, v, &mut cols, &mut names)?;
                }
                (Term::Categorical(name), Column::Numeric(v)) => {
                    let labels: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                    numeric_indicators(name, v, &labels, &mut cols, &mut names)?;
                }
            }
        }
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok((m, names))
    }

    fn basis_block(&self, basis: Option<&BasisConfig>) -> Result<(DMatrix<f64>, Vec<String>)> {
        let n = self.dataset.nrows();
        let Some(cfg) = basis else {
            return Ok((DMatrix::zeros(n, 0), Vec::new()));
        };
        let coords = self.dataset.coords().ok_or(Error::MissingCoords)?;
        let (centers, radii) = match cfg {
            BasisConfig::Grid { resolutions } => multiresolution_grid(coords, resolutions)?,
            BasisConfig::Explicit { centers, radii } => (centers.clone(), radii.clone()),
        };
        let m = bisquare_basis(coords, &centers, &radii)?;
        let names = default_names("basis_", m.ncols());
        Ok((m, names))
    }
}

fn indicators(
    name: &str,
    values: &[String],
    cols: &mut Vec<Vec<f64>>,
    names: &mut Vec<String>,
) -> Result<()> {
    let levels: BTreeSet<&str> = values.iter().map(String::as_str).collect();
    if levels.len() < 2 {
        return Err(Error::SingleLevel(name.to_string()));
    }
    // First level in sort order is the reference.
    for level in levels.iter().skip(1) {
        cols.push(
            values
                .iter()
                .map(|v| if v == level { 1.0 } else { 0.0 })
                .collect(),
        );
        names.push(format!("{name}[{level}]"));
    }
    Ok(())
}

fn numeric_indicators(
    name: &str,
    values: &[f64],
    labels: &[String],
    cols: &mut Vec<Vec<f64>>,
    names: &mut Vec<String>,
) -> Result<()> {
    let mut levels: Vec<f64> = values.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::SingleLevel(name.to_string()));
    }
    for &level in levels.iter().skip(1) {
        cols.push(
            values
                .iter()
                .map(|&v| if v == level { 1.0 } else { 0.0 })
                .collect(),
        );
        let label = values
            .iter()
            .position(|&v| v == level)
            .map(|i| labels[i].clone())
            .unwrap_or_default();
        names.push(format!("{name}[{label}]"));
    }
    Ok(())
}

/// Builds the four design blocks from named formula terms.
///
/// An intercept is always the first column of `X1` and `X2`. Continuous
/// covariates are centered and scaled to unit standard deviation; the
/// constants are kept in [`ModelSpec::scaling`].
pub fn build_design(
    dataset: &Dataset,
    mean_terms: &[Term],
    var_terms: &[Term],
    basis_mean: Option<&BasisConfig>,
    basis_var: Option<&BasisConfig>,
    likelihood: Likelihood,
    hyper: Hyperparams,
) -> Result<ModelSpec> {
    let mut b = BlockBuilder {
        dataset,
        scaling: Vec::new(),
    };
    let (x1, x1_names) = b.fixed_block(mean_terms)?;
    let (x2, x2_names) = b.fixed_block(var_terms)?;
    let (psi1, psi1_names) = b.basis_block(basis_mean)?;
    let (psi2, psi2_names) = b.basis_block(basis_var)?;
    let response = DVector::from_column_slice(dataset.y());
    let mut spec = ModelSpec::new(response, x1, psi1, x2, psi2, likelihood, hyper)?;
    spec.names = BlockNames {
        x1: x1_names,
        psi1: psi1_names,
        x2: x2_names,
        psi2: psi2_names,
    };
    spec.scaling = b.scaling;
    Ok(spec)
}

/// Bisquare kernel `(1 − (d/r)²)²` for `d ≤ r`, zero beyond.
pub fn bisquare(distance: f64, radius: f64) -> f64 {
    if distance <= radius {
        let t = distance / radius;
        let u = 1.0 - t * t;
        u * u
    } else {
        0.0
    }
}

/// `n × K` matrix of bisquare kernels evaluated at `coords`.
pub fn bisquare_basis(
    coords: &[[f64; 2]],
    centers: &[[f64; 2]],
    radii: &[f64],
) -> Result<DMatrix<f64>> {
    if centers.len() != radii.len() {
        return Err(Error::Dimension(format!(
            "{} centers with {} radii",
            centers.len(),
            radii.len()
        )));
    }
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Domain(format!("basis radius must be positive, got {r}")));
    }
    Ok(DMatrix::from_fn(coords.len(), centers.len(), |i, k| {
        let dx = coords[i][0] - centers[k][0];
        let dy = coords[i][1] - centers[k][1];
        bisquare((dx * dx + dy * dy).sqrt(), radii[k])
    }))
}

/// Concatenated `m × m` grids of centers, one per resolution, over the
/// coordinate bounding box widened by 5% (2.5% per side). Each radius is
/// 1.5 times the grid spacing of its resolution.
pub fn multiresolution_grid(
    coords: &[[f64; 2]],
    resolutions: &[usize],
) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    if coords.is_empty() {
        return Err(Error::Dimension("no coordinates to place a grid over".into()));
    }
    if resolutions.iter().any(|&m| m == 0) {
        return Err(Error::Domain("grid resolution must be at least one".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in coords {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let mut width = [0.0; 2];
    for d in 0..2 {
        let mut w = hi[d] - lo[d];
        if !(w > 0.0) {
            w = 1.0;
        }
        lo[d] -= 0.025 * w;
        width[d] = 1.05 * w;
    }
    let mut centers = Vec::new();
    let mut radii = Vec::new();
    for &m in resolutions {
        let spacing = [width[0] / m as f64, width[1] / m as f64];
        let radius = 1.5 * spacing[0].max(spacing[1]);
        for i in 0..m {
            for j in 0..m {
                centers.push([
                    lo[0] + (i as f64 + 0.5) * spacing[0],
                    lo[1] + (j as f64 + 0.5) * spacing[1],
                ]);
                radii.push(radius);
            }
        }
    }
    Ok((centers, radii))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn toy() -> Dataset {
        Dataset::new("y", vec![1.0, 2.0, 0.5, 3.0, 2.5, 1.5])
            .unwrap()
            .with_column("temp", Column::Numeric(vec![10.0, 12.0, 9.0, 15.0, 11.0, 13.0]))
            .unwrap()
            .with_column(
                "order",
                Column::Categorical(
                    ["b", "a", "c", "a", "b", "c"].iter().map(|s| s.to_string()).collect(),
                ),
            )
            .unwrap()
            .with_column("one", Column::Categorical(vec!["z".to_string(); 6]))
            .unwrap()
            .with_coords(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.2, 0.8]])
            .unwrap()
    }

    fn terms(names: &[&str]) -> Vec<Term> {
        names.iter().map(|s| Term::parse(s).unwrap()).collect()
    }

    #[test]
    fn intercept_only_variance_is_constant_variance_case() {
        let spec = build_design(
            &toy(),
            &terms(&["temp"]),
            &[],
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec.p2(), 1);
        assert_eq!(spec.r2(), 0);
        assert!(spec.x2.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn three_level_factor_gives_three_columns_with_intercept() {
        let spec = build_design(
            &toy(),
            &[],
            &terms(&["order"]),
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec.p2(), 3);
        assert_eq!(spec.names.x2, vec!["(Intercept)", "order[b]", "order[c]"]);
        // Reference level "a" rows have zero indicators.
        assert_eq!(spec.x2.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_formulas_give_identical_blocks() {
        let t = terms(&["temp", "order"]);
        let spec = build_design(
            &toy(),
            &t,
            &t,
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec.x1, spec.x2);
        let again = build_design(
            &toy(),
            &t,
            &t,
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn design_errors() {
        let ds = toy();
        let err = |m: &[&str], basis: Option<&BasisConfig>, ds: &Dataset| {
            build_design(ds, &terms(m), &[], basis, None, Likelihood::Gaussian, Hyperparams::default())
                .unwrap_err()
        };
        assert_eq!(err(&["tmep"], None, &ds), Error::UnknownColumn("tmep".into()));
        assert_eq!(err(&["one"], None, &ds), Error::SingleLevel("one".into()));
        let no_coords = Dataset::new("y", vec![1.0, 2.0]).unwrap();
        let grid = BasisConfig::Grid { resolutions: vec![2] };
        assert_eq!(err(&[], Some(&grid), &no_coords), Error::MissingCoords);
    }

    #[test]
    fn standardization_round_trips() {
        let spec = build_design(
            &toy(),
            &terms(&["temp"]),
            &[],
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        let s = &spec.scaling[0];
        let raw = [10.0, 12.0, 9.0, 15.0, 11.0, 13.0];
        for (i, &r) in raw.iter().enumerate() {
            let back = s.invert(spec.x1[(i, 1)]);
            assert!(((back - r) / r).abs() < 1e-12);
        }
        let col = spec.x1.column(1);
        assert!(col.mean().abs() < 1e-12);
        assert_relative_eq!(col.variance() * 6.0 / 5.0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn numeric_factor_codes() {
        let ds = Dataset::new("y", vec![1.0, 2.0, 3.0, 4.0])
            .unwrap()
            .with_column("code", Column::Numeric(vec![3.0, 1.0, 3.0, 2.0]))
            .unwrap();
        let spec = build_design(
            &ds,
            &terms(&["factor(code)"]),
            &[],
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec.names.x1, vec!["(Intercept)", "code[2]", "code[3]"]);
    }

    #[test]
    fn bisquare_values() {
        let c = [[1.0, 1.0]];
        let r = [2.0];
        let m = bisquare_basis(&[[1.0, 1.0], [3.0, 1.0], [2.0, 1.0], [5.0, 5.0]], &c, &r).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 0.0);
        assert_relative_eq!(m[(2, 0)], 0.5625);
        assert_eq!(m[(3, 0)], 0.0);
        assert!(bisquare_basis(&[[0.0, 0.0]], &c, &[0.0]).is_err());
    }

    #[test]
    fn grid_counts() {
        let unit = [[0.0, 0.0], [1.0, 1.0], [0.3, 0.6]];
        let (c, r) = multiresolution_grid(&unit, &[2]).unwrap();
        assert_eq!(c.len(), 4);
        let (c, r2) = multiresolution_grid(&unit, &[2, 3]).unwrap();
        assert_eq!(c.len(), 13);
        assert!(r.iter().chain(&r2).all(|&x| x > 0.0));
        assert!(multiresolution_grid(&[], &[2]).is_err());
        assert!(multiresolution_grid(&unit, &[0]).is_err());
    }

    #[test]
    fn basis_block_in_design() {
        let spec = build_design(
            &toy(),
            &[],
            &[],
            Some(&BasisConfig::Grid { resolutions: vec![2] }),
            Some(&BasisConfig::Grid { resolutions: vec![1, 2] }),
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        assert_eq!(spec.r1(), 4);
        assert_eq!(spec.r2(), 5);
        assert!(spec.psi1.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn subset_keeps_rows() {
        let spec = build_design(
            &toy(),
            &terms(&["temp"]),
            &[],
            None,
            None,
            Likelihood::Gaussian,
            Hyperparams::default(),
        )
        .unwrap();
        let sub = spec.subset(&[4, 1]);
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.response[0], 2.5);
        assert_eq!(sub.x1.row(1), spec.x1.row(1));
    }
}
