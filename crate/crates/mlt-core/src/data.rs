//! Observations with censoring and truncation status, ordered factor
//! levels, and CSV ingestion.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("duplicate level '{0}'")]
    DuplicateLevel(String),
    #[error("ordered factor needs at least 2 levels")]
    TooFewLevels,
    #[error("dataset is empty")]
    Empty,
}

/// Possibly infinite interval endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Bound {
    pub fn as_f64(&self) -> f64 {
        match self {
            Bound::NegInf => f64::NEG_INFINITY,
            Bound::Finite(v) => *v,
            Bound::PosInf => f64::INFINITY,
        }
    }
}

/// Censoring status of a response datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Exact(f64),
    /// `Y <= upper`.
    Left(f64),
    /// `Y > lower`.
    Right(f64),
    /// `Y in (lower, upper]`.
    Interval(f64, f64),
}

impl Response {
    pub fn lower(&self) -> Bound {
        match self {
            Response::Exact(y) => Bound::Finite(*y),
            Response::Left(_) => Bound::NegInf,
            Response::Right(l) => Bound::Finite(*l),
            Response::Interval(l, _) => Bound::Finite(*l),
        }
    }

    pub fn upper(&self) -> Bound {
        match self {
            Response::Exact(y) => Bound::Finite(*y),
            Response::Left(u) => Bound::Finite(*u),
            Response::Right(_) => Bound::PosInf,
            Response::Interval(_, u) => Bound::Finite(*u),
        }
    }
}

/// One response datum plus an optional truncation interval `(y_l, y_r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub response: Response,
    pub truncation: Option<(Bound, Bound)>,
}

impl Observation {
    pub fn exact(y: f64) -> Self {
        Observation {
            response: Response::Exact(y),
            truncation: None,
        }
    }

    pub fn new(response: Response) -> Self {
        Observation {
            response,
            truncation: None,
        }
    }

    pub fn truncated(mut self, lower: Bound, upper: Bound) -> Self {
        self.truncation = Some((lower, upper));
        self
    }
}

/// Ordered factor levels; level strings map to indices `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMap {
    levels: Vec<String>,
}

impl LevelMap {
    pub fn new(levels: Vec<String>) -> Result<Self, DataError> {
        if levels.len() < 2 {
            return Err(DataError::TooFewLevels);
        }
        for (i, l) in levels.iter().enumerate() {
            if levels[..i].contains(l) {
                return Err(DataError::DuplicateLevel(l.clone()));
            }
        }
        Ok(LevelMap { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    /// 1-based index of a level string.
    pub fn index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == name).map(|i| i + 1)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.levels.get(index - 1).map(String::as_str)
    }

    /// Interval-censoring representation of category `k`: `(k-1, k]`.
    pub fn as_interval(&self, k: usize) -> (usize, usize) {
        (k - 1, k)
    }
}

/// How the response is encoded in a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResponseSchema {
    /// Single numeric column of exact observations.
    Exact { column: String },
    /// Interval bounds; an empty cell means an infinite endpoint, equal
    /// bounds mean an exact observation.
    Bounds { lower: String, upper: String },
    /// Ordered factor with a declared level order.
    Factor { column: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: ResponseSchema,
    /// Optional truncation bound columns (lower, upper); empty cells mean
    /// an unbounded side.
    pub truncation: Option<(String, String)>,
    pub covariates: Vec<String>,
}

/// Immutable dataset: responses plus a rectangular covariate block.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    /// Row-major covariate rows, all of the same length.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// Present when the response is an ordered factor.
    pub levels: Option<LevelMap>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i]
    }

    pub fn from_parts(observations: Vec<Observation>, covariates: Vec<Vec<f64>>) -> Self {
        let q = covariates.first().map(Vec::len).unwrap_or(0);
        Dataset {
            covariate_names: (0..q).map(|i| format!("x{}", i + 1)).collect(),
            observations,
            covariates,
            levels: None,
        }
    }

    /// All finite response endpoint values, e.g. for support selection.
    pub fn response_values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for o in &self.observations {
            for b in [o.response.lower(), o.response.upper()] {
                if let Bound::Finite(y) = b {
                    v.push(y);
                }
            }
        }
        v
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let col = |name: &str| -> Result<usize, DataError> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
        };

        let response_cols = match &schema.response {
            ResponseSchema::Exact { column } => vec![col(column)?],
            ResponseSchema::Bounds { lower, upper } => vec![col(lower)?, col(upper)?],
            ResponseSchema::Factor { column, .. } => vec![col(column)?],
        };
        let trunc_cols = match &schema.truncation {
            Some((l, u)) => Some((col(l)?, col(u)?)),
            None => None,
        };
        let cov_cols = schema
            .covariates
            .iter()
            .map(|c| col(c))
            .collect::<Result<Vec<_>, _>>()?;

        let levels = match &schema.response {
            ResponseSchema::Factor { levels, .. } => Some(LevelMap::new(levels.clone())?),
            _ => None,
        };

        let mut observations = Vec::new();
        let mut covariates = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = row_idx + 1;
            let cell = |i: usize| record.get(i).unwrap_or("").trim();
            let parse_num = |i: usize| -> Result<f64, DataError> {
                cell(i).parse::<f64>().map_err(|_| DataError::Row {
                    row,
                    message: format!("cannot parse '{}' in column '{}'", cell(i), headers[i]),
                })
            };

            let response = match &schema.response {
                ResponseSchema::Exact { .. } => Response::Exact(parse_num(response_cols[0])?),
                ResponseSchema::Bounds { .. } => {
                    let lo = cell(response_cols[0]);
                    let hi = cell(response_cols[1]);
                    match (lo.is_empty(), hi.is_empty()) {
                        (true, true) => {
                            return Err(DataError::Row {
                                row,
                                message: "both interval bounds are empty".into(),
                            })
                        }
                        (false, true) => Response::Right(parse_num(response_cols[0])?),
                        (true, false) => Response::Left(parse_num(response_cols[1])?),
                        (false, false) => {
                            let l = parse_num(response_cols[0])?;
                            let u = parse_num(response_cols[1])?;
                            if l == u {
                                Response::Exact(l)
                            } else if l < u {
                                Response::Interval(l, u)
                            } else {
                                return Err(DataError::Row {
                                    row,
                                    message: format!("lower bound {l} >= upper bound {u}"),
                                });
                            }
                        }
                    }
                }
                ResponseSchema::Factor { .. } => {
                    let map = levels.as_ref().unwrap();
                    let name = cell(response_cols[0]);
                    let k = map.index(name).ok_or_else(|| DataError::Row {
                        row,
                        message: format!("unknown factor level '{name}'"),
                    })?;
                    Response::Exact(k as f64)
                }
            };

            let truncation = match trunc_cols {
                Some((li, ui)) => {
                    let lo = cell(li);
                    let hi = cell(ui);
                    if lo.is_empty() && hi.is_empty() {
                        None
                    } else {
                        let l = if lo.is_empty() {
                            Bound::NegInf
                        } else {
                            Bound::Finite(parse_num(li)?)
                        };
                        let u = if hi.is_empty() {
                            Bound::PosInf
                        } else {
                            Bound::Finite(parse_num(ui)?)
                        };
                        Some((l, u))
                    }
                }
                None => None,
            };

            let obs = Observation {
                response,
                truncation,
            };
            validate_truncation(&obs).map_err(|message| DataError::Row { row, message })?;

            let mut x = Vec::with_capacity(cov_cols.len());
            for &ci in &cov_cols {
                let raw = cell(ci);
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    return Err(DataError::Row {
                        row,
                        message: format!("missing covariate '{}'", headers[ci]),
                    });
                }
                x.push(parse_num(ci)?);
            }
            observations.push(obs);
            covariates.push(x);
        }

        if observations.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Dataset {
            observations,
            covariates,
            covariate_names: schema.covariates.clone(),
            levels,
        })
    }

    /// Write in the canonical bounds format read back by a
    /// `ResponseSchema::Bounds` schema.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "lower,upper,tlower,tupper")?;
        for name in &self.covariate_names {
            write!(f, ",{name}")?;
        }
        writeln!(f)?;
        let fmt = |b: Bound| match b {
            Bound::Finite(v) => format!("{v}"),
            _ => String::new(),
        };
        for (obs, x) in self.observations.iter().zip(&self.covariates) {
            let (lo, hi) = (obs.response.lower(), obs.response.upper());
            let (tl, tu) = obs.truncation.unwrap_or((Bound::NegInf, Bound::PosInf));
            write!(f, "{},{},{},{}", fmt(lo), fmt(hi), fmt(tl), fmt(tu))?;
            for v in x {
                write!(f, ",{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn validate_truncation(obs: &Observation) -> Result<(), String> {
    let Some((tl, tu)) = obs.truncation else {
        return Ok(());
    };
    if let (Bound::Finite(l), Bound::Finite(u)) = (tl, tu) {
        if l >= u {
            return Err(format!("truncation bounds ({l}, {u}] are empty"));
        }
    }
    // y_l < lower(y) and upper(y) <= y_r
    if let Bound::Finite(l) = tl {
        match obs.response.lower() {
            Bound::Finite(y) if l < y => {}
            Bound::Finite(y) => {
                return Err(format!(
                    "truncation lower bound {l} must lie strictly below the response bound {y}"
                ))
            }
            _ => return Err("finite truncation lower bound with unbounded response".into()),
        }
    }
    if let Bound::Finite(u) = tu {
        match obs.response.upper() {
            Bound::Finite(y) if y <= u => {}
            Bound::Finite(y) => {
                return Err(format!(
                    "response upper bound {y} exceeds truncation bound {u}"
                ))
            }
            _ => return Err("finite truncation upper bound with unbounded response".into()),
        }
    }
    Ok(())
}
