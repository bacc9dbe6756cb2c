//! Chain persistence: one CSV per chain plus a `.meta.toml` sidecar.
//!
//! Chain files start with `#` lines holding the resolved configuration,
//! followed by a header row and one row per stored draw. Values carry 17
//! significant digits so reloading reproduces every draw exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hetgibbs_core::gibbs::{Block, Diagnostics, PosteriorChain};

use crate::error::{Error, Result};
use crate::io::{format_number, parse_number};

/// Writes `names` and rows with a commented provenance preamble.
pub fn write_chain_csv(
    path: impl AsRef<Path>,
    preamble: &str,
    names: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for line in preamble.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {line}");
        }
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != names.len() {
            return Err(Error::format(
                path,
                format!("row has {} values for {} columns", row.len(), names.len()),
            ));
        }
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Contents of a chain CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    /// Preamble with the `# ` prefixes removed.
    pub preamble: String,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_chain_csv(path: impl AsRef<Path>) -> Result<ChainFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut preamble = String::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next_if(|l| l.starts_with('#')) {
        let body = line.strip_prefix("# ").unwrap_or(&line[1..]);
        preamble.push_str(body);
        preamble.push('\n');
    }
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "missing header row"))?;
    let names: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Option<Vec<f64>> = line.split(',').map(parse_number).collect();
        let row = row.ok_or_else(|| Error::format(path, format!("bad number on draw {}", i + 1)))?;
        if row.len() != names.len() {
            return Err(Error::format(path, format!("ragged draw {}", i + 1)));
        }
        rows.push(row);
    }
    Ok(ChainFile {
        preamble,
        names,
        rows,
    })
}

/// Sidecar metadata for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub chain: u64,
    pub seed: u64,
    pub draws: usize,
    pub spec_digest: String,
    pub elapsed_seconds: f64,
    pub exp_clamps: u64,
    pub rate_floors: u64,
    pub truncation_attempts: u64,
    pub truncation_fallbacks: u64,
    pub jitters: u64,
    /// Seconds spent in each block.
    pub block_seconds: std::collections::BTreeMap<String, f64>,
    /// Resolved run configuration.
    pub config: toml::Table,
}

impl ChainMeta {
    pub fn new(chain: &PosteriorChain, elapsed_seconds: f64, config: toml::Table) -> Self {
        let d: &Diagnostics = &chain.diagnostics;
        let block_seconds = Block::ALL
            .iter()
            .zip(d.block_nanos)
            .map(|(b, ns)| (b.name().to_string(), ns as f64 * 1e-9))
            .collect();
        Self {
            chain: chain.chain_index,
            seed: chain.seed,
            draws: chain.states.len(),
            spec_digest: format!("{:016x}", chain.spec_digest),
            elapsed_seconds,
            exp_clamps: d.exp_clamps,
            rate_floors: d.rate_floors,
            truncation_attempts: d.truncation_attempts,
            truncation_fallbacks: d.truncation_fallbacks,
            jitters: d.jitters,
            block_seconds,
            config,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `chain_{k}.csv` and `chain_{k}.meta.toml` inside `dir`.
pub fn chain_paths(dir: &Path, chain: u64) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("chain_{chain}.csv")),
        dir.join(format!("chain_{chain}.meta.toml")),
    )
}
