//! Datasets: covariates in `[0, 1]^r` plus responses, with CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` observations of `r` covariates (row-major) and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    r: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    names: Vec<String>,
    response_name: String,
    provenance: Provenance,
}

/// Where a dataset came from and how it was transformed on the way in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    /// Per-column maxima used for `x -> x / x_max`, when standardization was applied.
    pub scale: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major covariates. All covariates must lie in `[0, 1]`.
    pub fn new(r: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let names = (1..=r).map(|s| format!("x{s}")).collect();
        Self::with_names(x, y, names, "y".into())
    }

    pub fn with_names(x: Vec<f64>, y: Vec<f64>, names: Vec<String>, response_name: String) -> Result<Self> {
        let r = names.len();
        if r == 0 {
            return Err(Error::Shape("dataset needs at least one covariate".into()));
        }
        if y.is_empty() {
            return Err(Error::Shape("dataset needs at least one observation".into()));
        }
        if x.len() != r * y.len() {
            return Err(Error::Shape(format!(
                "{} covariate values do not form {} rows of {r}",
                x.len(),
                y.len()
            )));
        }
        for (idx, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(
                    format!("covariate {} of row {}", names[idx % r], idx / r),
                    v,
                ));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("response of row {i} is not finite")));
        }
        Ok(Self {
            r,
            x,
            y,
            names,
            response_name,
            provenance: Provenance::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::Shape("ragged covariate rows".into()));
        }
        Self::new(r, rows.concat(), y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.r..(i + 1) * self.r]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.r)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Same design, new responses.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Shape(format!(
                "expected {} responses, got {}",
                self.n(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("response of row {i} is not finite")));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Reads a headered CSV. Every column other than `response` is a covariate.
    /// With `standardize`, each covariate column is divided by its maximum.
    pub fn read_csv<R: Read>(reader: R, response: &str, standardize: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Ingestion(format!("cannot read header: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let y_col = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::Ingestion(format!("response column {response:?} not found in header {headers:?}")))?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != y_col)
            .map(|(_, h)| h.clone())
            .collect();
        let r = names.len();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingestion(format!("row {}: {e}", row + 1)))?;
            if rec.len() != headers.len() {
                return Err(Error::Ingestion(format!(
                    "row {} has {} fields, header has {}",
                    row + 1,
                    rec.len(),
                    headers.len()
                )));
            }
            for (col, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Ingestion(format!(
                        "row {}, column {:?}: {field:?} is not a number",
                        row + 1,
                        headers[col]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Ingestion(format!(
                        "row {}, column {:?}: {field:?} is not finite",
                        row + 1,
                        headers[col]
                    )));
                }
                if col == y_col {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        if y.is_empty() {
            return Err(Error::Ingestion("no data rows".into()));
        }
        let mut provenance = Provenance::default();
        if standardize {
            let mut maxima = vec![f64::NEG_INFINITY; r];
            for row in x.chunks_exact(r) {
                for (m, &v) in maxima.iter_mut().zip(row) {
                    *m = m.max(v);
                }
            }
            if let Some(s) = maxima.iter().position(|&m| m <= 0.0) {
                return Err(Error::Ingestion(format!(
                    "column {:?} has non-positive maximum {}; cannot standardize",
                    names[s], maxima[s]
                )));
            }
            for row in x.chunks_exact_mut(r) {
                for (v, m) in row.iter_mut().zip(&maxima) {
                    *v /= m;
                }
            }
            provenance.scale = Some(maxima);
        }
        Ok(Self::with_names(x, y, names, response.to_owned())?.with_provenance(provenance))
    }

    pub fn load_csv(path: &Path, response: &str, standardize: bool) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        let mut ds = Self::read_csv(file, response, standardize)?;
        ds.provenance.source = Some(path.display().to_string());
        Ok(ds)
    }

    /// Writes covariates then the response. Floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Ingestion(format!("write failed: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.names.iter().chain(std::iter::once(&self.response_name)))
            .map_err(io)?;
        for (row, y) in self.points().zip(&self.y) {
            w.write_record(row.iter().chain(std::iter::once(y)).map(f64::to_string))
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Ingestion(format!("write failed: {e}")))
    }
}
