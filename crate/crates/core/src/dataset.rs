//! Observed data `(Z_i, T_i, Y_i)` and CSV ingestion.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Outcome, exposure and baseline covariates for `n` units.
///
/// Covariates are stored row-major (`n x p`) and used as given: no centering
/// or scaling happens anywhere in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    z: Vec<f64>,
    p: usize,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from a row-major covariate buffer of length `n * p`.
    ///
    /// Requires `n >= p + 3` and finite values everywhere.
    pub fn new(
        y: Vec<f64>,
        t: Vec<f64>,
        z: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let d = Self::from_parts(y, t, z, covariate_names)?;
        let required = d.p + 3;
        if d.n() < required {
            return Err(Error::TooFewRows {
                n: d.n(),
                p: d.p,
                required,
            });
        }
        Ok(d)
    }

    /// Convenience constructor from one `Vec` per row of covariates.
    pub fn from_rows(
        y: Vec<f64>,
        t: Vec<f64>,
        z_rows: &[Vec<f64>],
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let p = covariate_names.len();
        if let Some(r) = z_rows.iter().position(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "covariate row {} has {} values, expected {p}",
                r + 1,
                z_rows[r].len()
            )));
        }
        Self::new(y, t, z_rows.concat(), covariate_names)
    }

    fn from_parts(y: Vec<f64>, t: Vec<f64>, z: Vec<f64>, covariate_names: Vec<String>) -> Result<Self> {
        let n = y.len();
        let p = covariate_names.len();
        if t.len() != n || z.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, t has {}, covariate buffer has {} values for p = {p}",
                t.len(),
                z.len()
            )));
        }
        for (col, values, stride) in [("y", &y, 1), ("t", &t, 1)] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i / stride + 1,
                    col: col.to_string(),
                });
            }
        }
        if let Some(k) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / p + 1,
                col: covariate_names[k % p].clone(),
            });
        }
        Ok(Self {
            y,
            t,
            z,
            p,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.p..(i + 1) * self.p]
    }

    /// Row-major `n x p` covariate buffer.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Copy of the given rows, in the given order (repeats allowed).
    ///
    /// Unlike [`Dataset::new`] this does not enforce `n >= p + 3`; strata and
    /// bootstrap resamples are checked by the estimators that consume them.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut y = Vec::with_capacity(rows.len());
        let mut t = Vec::with_capacity(rows.len());
        let mut z = Vec::with_capacity(rows.len() * self.p);
        for &r in rows {
            y.push(self.y[r]);
            t.push(self.t[r]);
            z.extend_from_slice(self.z_row(r));
        }
        Dataset {
            y,
            t,
            z,
            p: self.p,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Same covariates and exposure with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Self::from_parts(y, self.t.clone(), self.z.clone(), self.covariate_names.clone())
    }
}

/// What to do with a row whose referenced cells do not parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Error,
    /// Drop such rows before building the dataset.
    DropIncomplete,
}

/// Column selection for CSV ingestion.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub outcome: String,
    pub exposure: String,
    pub covariates: Vec<String>,
}

impl ColumnSpec {
    pub fn new(outcome: &str, exposure: &str, covariates: &[&str]) -> Self {
        Self {
            outcome: outcome.to_string(),
            exposure: exposure.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnSpec) -> Result<Dataset> {
    load_csv_with(path, columns, MissingPolicy::Error)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    columns: &ColumnSpec,
    policy: MissingPolicy,
) -> Result<Dataset> {
    read_csv(File::open(path)?, columns, policy)
}

/// Parses a header-first CSV. Rows keep file order; with
/// [`MissingPolicy::Error`] the first unparseable cell is reported as
/// `ParseError { row, col }` with `row` counted from 1 after the header.
pub fn read_csv<R: Read>(reader: R, columns: &ColumnSpec, policy: MissingPolicy) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let wanted: Vec<&str> = [columns.outcome.as_str(), columns.exposure.as_str()]
        .into_iter()
        .chain(columns.covariates.iter().map(String::as_str))
        .collect();
    let idx: Vec<usize> = wanted.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let p = columns.covariates.len();
    let (mut y, mut t, mut z) = (Vec::new(), Vec::new(), Vec::new());
    let mut parsed = vec![0.0; wanted.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut bad = None;
        for (k, &c) in idx.iter().enumerate() {
            match record.get(c).and_then(parse_cell) {
                Some(v) => parsed[k] = v,
                None => {
                    bad = Some(k);
                    break;
                }
            }
        }
        match (bad, policy) {
            (Some(k), MissingPolicy::Error) => {
                return Err(Error::ParseError {
                    row: r + 1,
                    col: wanted[k].to_string(),
                })
            }
            (Some(_), MissingPolicy::DropIncomplete) => continue,
            (None, _) => {
                y.push(parsed[0]);
                t.push(parsed[1]);
                z.extend_from_slice(&parsed[2..2 + p]);
            }
        }
    }
    Dataset::new(y, t, z, columns.covariates.clone())
}

fn parse_cell(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `y`, `t` and the covariates with the given column names. Values use
/// Rust's shortest round-trip formatting, so re-reading restores identical
/// bits.
pub fn write_csv<W: Write>(d: &Dataset, writer: W, outcome: &str, exposure: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![outcome.to_string(), exposure.to_string()];
    header.extend(d.covariate_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..d.n() {
        rec.clear();
        rec.push(d.y[i].to_string());
        rec.push(d.t[i].to_string());
        rec.extend(d.z_row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One stratum of a partition: its 1-based index, the original row indices
/// and the corresponding sub-dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub index: usize,
    pub rows: Vec<usize>,
    pub data: Dataset,
}

impl Stratum {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Partitions rows by `assignment` (values in `1..=l_count`), keeping the
/// original row order inside each stratum.
pub fn split_by_strata(d: &Dataset, assignment: &[usize], l_count: usize) -> Result<Vec<Stratum>> {
    if assignment.len() != d.n() {
        return Err(Error::DimensionMismatch(format!(
            "assignment has length {}, dataset has {} rows",
            assignment.len(),
            d.n()
        )));
    }
    if l_count == 0 {
        return Err(Error::InvalidArgument("stratum count must be at least 1".into()));
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); l_count];
    for (i, &s) in assignment.iter().enumerate() {
        if s == 0 || s > l_count {
            return Err(Error::InvalidArgument(format!(
                "row {} assigned to stratum {s}, expected 1..={l_count}",
                i + 1
            )));
        }
        rows[s - 1].push(i);
    }
    if let Some(l) = rows.iter().position(|r| r.len() < 3) {
        return Err(Error::EmptyStratum(l + 1));
    }
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(l, rows)| Stratum {
            index: l + 1,
            data: d.subset(&rows),
            rows,
        })
        .collect())
}
