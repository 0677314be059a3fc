//! Observed competing-risks records, their schema and CSV ingestion.

mod basis;
mod events;

pub use basis::{build_time_basis, quantile_type7, BasisKind, BasisSpec, TimeBasis};
pub use events::EventTable;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed subject: `time = min(T, C)` and `status` is 0 for censoring
/// or the cause `1..=J` of the observed failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub time: f64,
    pub status: u32,
    pub covariates: Vec<f64>,
}

impl Subject {
    pub fn is_event(&self) -> bool {
        self.status > 0
    }
}

/// Affine covariate map `x -> (x - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

impl AffineTransform {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }
}

fn one() -> f64 {
    1.0
}

/// Covariate subsets for the three model components: incidence (X), the
/// conditional Cox latency (Z) and the relative hazards (U).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignMap {
    #[serde(default)]
    pub incidence: Vec<String>,
    #[serde(default)]
    pub latency: Vec<String>,
    #[serde(default)]
    pub relhaz: Vec<String>,
}

impl DesignMap {
    pub fn all(names: &[String]) -> Self {
        DesignMap {
            incidence: names.to_vec(),
            latency: names.to_vec(),
            relhaz: names.to_vec(),
        }
    }
}

/// How a CSV file maps onto a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub num_causes: u32,
    /// Optional identifier column; row numbers are used otherwise.
    #[serde(default)]
    pub id_column: Option<String>,
    /// Observed times are divided by this factor (e.g. 365.25 for days to years).
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Raw status code -> model status (0 = censored, j = cause j).
    #[serde(default)]
    pub status_map: Option<BTreeMap<String, u32>>,
    /// Covariate columns to keep, in order.
    pub covariates: Vec<String>,
    #[serde(default)]
    pub transforms: BTreeMap<String, AffineTransform>,
}

impl DataSchema {
    /// Schema that reads a file produced by [`Dataset::write_csv`] unchanged.
    pub fn identity(num_causes: u32, covariates: &[String]) -> Self {
        DataSchema {
            num_causes,
            id_column: Some("id".into()),
            time_scale: 1.0,
            status_map: None,
            covariates: covariates.to_vec(),
            transforms: BTreeMap::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_causes < 1 {
            return Err(Error::Schema("num_causes must be at least 1".into()));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::Schema("time_scale must be positive".into()));
        }
        for (name, tr) in &self.transforms {
            if !self.covariates.contains(name) {
                return Err(Error::Schema(format!(
                    "transform declared for `{name}` which is not a covariate"
                )));
            }
            if !(tr.scale.is_finite() && tr.scale != 0.0 && tr.shift.is_finite()) {
                return Err(Error::Schema(format!("degenerate transform for `{name}`")));
            }
        }
        Ok(())
    }
}

/// Right-censored competing-risks data with a covariate design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub num_causes: u32,
    pub covariate_names: Vec<String>,
    pub design: DesignMap,
}

impl Dataset {
    /// Validates the records; the design defaults to every covariate in every
    /// component.
    pub fn new(subjects: Vec<Subject>, num_causes: u32, covariate_names: Vec<String>) -> Result<Self> {
        if num_causes < 1 {
            return Err(Error::Schema("num_causes must be at least 1".into()));
        }
        if subjects.is_empty() {
            return Err(Error::NoRows);
        }
        for (i, s) in subjects.iter().enumerate() {
            if !(s.time.is_finite() && s.time >= 0.0) {
                return Err(Error::NegativeTime { row: i + 1, time: s.time });
            }
            if s.status > num_causes {
                return Err(Error::InvalidStatus {
                    row: i + 1,
                    status: s.status as i64,
                    num_causes,
                });
            }
            if s.covariates.len() != covariate_names.len() {
                return Err(Error::Schema(format!(
                    "row {}: {} covariates, expected {}",
                    i + 1,
                    s.covariates.len(),
                    covariate_names.len()
                )));
            }
            if let Some(k) = s.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumeric {
                    row: i + 1,
                    column: covariate_names[k].clone(),
                    value: s.covariates[k].to_string(),
                });
            }
        }
        let design = DesignMap::all(&covariate_names);
        Ok(Dataset {
            subjects,
            num_causes,
            covariate_names,
            design,
        })
    }

    pub fn with_design(mut self, design: DesignMap) -> Result<Self> {
        for name in design
            .incidence
            .iter()
            .chain(&design.latency)
            .chain(&design.relhaz)
        {
            self.column_index(name)?;
        }
        self.design = design;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.time).collect()
    }

    pub fn statuses(&self) -> Vec<u32> {
        self.subjects.iter().map(|s| s.status).collect()
    }

    pub fn num_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.is_event()).count()
    }

    /// Event counts per cause, index `j - 1` for cause `j`.
    pub fn cause_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_causes as usize];
        for s in &self.subjects {
            if s.status > 0 {
                c[s.status as usize - 1] += 1;
            }
        }
        c
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column_index(n)).collect()
    }

    /// `n x (intercept + |cols|)` design matrix.
    pub fn design_matrix(&self, cols: &[String], intercept: bool) -> Result<DMatrix<f64>> {
        let idx = self.column_indices(cols)?;
        let off = usize::from(intercept);
        Ok(DMatrix::from_fn(self.len(), idx.len() + off, |i, k| {
            if intercept && k == 0 {
                1.0
            } else {
                self.subjects[i].covariates[idx[k - off]]
            }
        }))
    }

    /// Sample means of the named covariates.
    pub fn covariate_means(&self) -> BTreeMap<String, f64> {
        let n = self.len() as f64;
        self.covariate_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let m = self.subjects.iter().map(|s| s.covariates[k]).sum::<f64>() / n;
                (name.clone(), m)
            })
            .collect()
    }

    /// Subset (with repetition) by subject index; used by the bootstrap.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            num_causes: self.num_causes,
            covariate_names: self.covariate_names.clone(),
            design: self.design.clone(),
        }
    }

    /// Writes `id,time,status,<covariates>` with shortest round-trip float
    /// formatting, so re-reading with [`DataSchema::identity`] is lossless.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "time".into(), "status".into()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for s in &self.subjects {
            let mut rec = vec![s.id.clone(), format!("{}", s.time), s.status.to_string()];
            rec.extend(s.covariates.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(f)
    }
}

/// Reads and validates a CSV file. Row numbers in errors count data rows
/// from 1 (the header is not counted).
pub fn load_dataset(path: &Path, schema: &DataSchema) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_dataset(f, schema)
}

pub fn parse_dataset<R: Read>(reader: R, schema: &DataSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoRows);
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_col = find("time")?;
    let status_col = find("status")?;
    let id_col = schema.id_column.as_deref().map(find).transpose()?;
    let cov_cols: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let transforms: Vec<Option<AffineTransform>> = schema
        .covariates
        .iter()
        .map(|c| schema.transforms.get(c).copied())
        .collect();

    let mut subjects = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let raw_time = cell(time_col, "time")?;
        if raw_time < 0.0 {
            return Err(Error::NegativeTime { row, time: raw_time });
        }
        let raw_status = cell(status_col, "status")?;
        if raw_status.fract() != 0.0 {
            return Err(Error::NonNumeric {
                row,
                column: "status".into(),
                value: rec.get(status_col).unwrap_or("").to_string(),
            });
        }
        let code = raw_status as i64;
        let status = match &schema.status_map {
            Some(map) => *map.get(&code.to_string()).ok_or(Error::InvalidStatus {
                row,
                status: code,
                num_causes: schema.num_causes,
            })?,
            None => {
                if code < 0 {
                    return Err(Error::InvalidStatus {
                        row,
                        status: code,
                        num_causes: schema.num_causes,
                    });
                }
                code as u32
            }
        };
        if status > schema.num_causes {
            return Err(Error::InvalidStatus {
                row,
                status: status as i64,
                num_causes: schema.num_causes,
            });
        }
        let covariates = cov_cols
            .iter()
            .zip(&schema.covariates)
            .zip(&transforms)
            .map(|((&col, name), tr)| {
                let v = cell(col, name)?;
                Ok(tr.map_or(v, |t| t.apply(v)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let id = match id_col {
            Some(c) => rec.get(c).unwrap_or("").to_string(),
            None => row.to_string(),
        };
        subjects.push(Subject {
            id,
            time: raw_time / schema.time_scale,
            status,
            covariates,
        });
    }
    if subjects.is_empty() {
        return Err(Error::NoRows);
    }
    Dataset::new(subjects, schema.num_causes, schema.covariates.clone())
}
