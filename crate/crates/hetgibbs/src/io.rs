//! CSV ingestion into [`Dataset`] values.

use std::path::{Path, PathBuf};

use hetgibbs_core::design::{Column, Dataset};

use crate::error::{Error, Result};

/// Raw table: headers plus trimmed cell text; empty cells are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Which columns of a table become the response, covariates, locations and
/// time index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub response: String,
    pub columns: Vec<String>,
    pub coords: Option<[String; 2]>,
    pub time: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

/// Parses a finite decimal number (`"1e3"` is 1000).
pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed, comma-separated UTF-8 file. Ragged rows are an error.
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable {
            path: path.to_path_buf(),
        });
    }
    Ok(Table {
        path: path.to_path_buf(),
        headers,
        rows,
    })
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| hetgibbs_core::Error::UnknownColumn(name.to_string()).into())
    }

    fn numeric(&self, idx: usize, keep: &[usize], what: &str) -> Result<Vec<f64>> {
        keep.iter()
            .map(|&r| {
                parse_number(&self.rows[r][idx]).ok_or_else(|| {
                    Error::format(
                        &self.path,
                        format!(
                            "{what} column `{}` has non-numeric value `{}` on data row {}",
                            self.headers[idx],
                            self.rows[r][idx],
                            r + 1
                        ),
                    )
                })
            })
            .collect()
    }

    /// Builds a dataset from the selected columns, dropping rows where any
    /// selected cell is empty.
    pub fn to_dataset(&self, sel: &Selection) -> Result<LoadReport> {
        let response = self.column_index(&sel.response)?;
        let mut referenced = vec![response];
        let covariates: Vec<usize> = sel
            .columns
            .iter()
            .map(|c| self.column_index(c))
            .collect::<Result<_>>()?;
        referenced.extend(&covariates);
        let coords = match &sel.coords {
            Some([a, b]) => Some([self.column_index(a)?, self.column_index(b)?]),
            None => None,
        };
        referenced.extend(coords.iter().flatten());
        let time = sel.time.as_deref().map(|t| self.column_index(t)).transpose()?;
        referenced.extend(time);

        let keep: Vec<usize> = (0..self.rows.len())
            .filter(|&r| referenced.iter().all(|&c| !self.rows[r][c].is_empty()))
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyTable {
                path: self.path.clone(),
            });
        }
        let y = self.numeric(response, &keep, "response")?;
        let mut ds = Dataset::new(sel.response.clone(), y)?;
        for (&idx, name) in covariates.iter().zip(&sel.columns) {
            let cells: Vec<&str> = keep.iter().map(|&r| self.rows[r][idx].as_str()).collect();
            let parsed: Option<Vec<f64>> = cells.iter().map(|c| parse_number(c)).collect();
            let column = match parsed {
                Some(v) => Column::Numeric(v),
                None => Column::Categorical(cells.iter().map(|c| c.to_string()).collect()),
            };
            ds = ds.with_column(name.clone(), column)?;
        }
        if let Some([a, b]) = coords {
            let xs = self.numeric(a, &keep, "coordinate")?;
            let ys = self.numeric(b, &keep, "coordinate")?;
            ds = ds.with_coords(xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect())?;
        }
        if let Some(t) = time {
            ds = ds.with_time_index(self.numeric(t, &keep, "time")?)?;
        }
        let dropped = self.rows.len() - keep.len();
        Ok(LoadReport {
            dataset: ds.with_dropped_rows(dropped),
            rows_read: self.rows.len(),
            rows_dropped: dropped,
        })
    }
}

/// [`read_table`] followed by [`Table::to_dataset`].
pub fn load_csv(path: impl AsRef<Path>, sel: &Selection) -> Result<LoadReport> {
    read_table(path)?.to_dataset(sel)
}

/// Writes named numeric columns as CSV with full precision.
pub fn write_columns(path: impl AsRef<Path>, names: &[String], columns: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(names).map_err(csv_err)?;
    let n = columns.first().map_or(0, Vec::len);
    for i in 0..n {
        w.write_record(columns.iter().map(|c| format_number(c[i])))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV whose first lines are `# `-prefixed provenance text.
pub fn write_commented_csv(
    path: impl AsRef<Path>,
    preamble: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for line in preamble.lines() {
        out.push('#');
        if !line.is_empty() {
            out.push(' ');
            out.push_str(line);
        }
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
