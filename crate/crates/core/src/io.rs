//! Matrix CSV and versioned JSON envelopes.
//!
//! Matrices are row-major everywhere: CSV files carry one matrix row per
//! line with no header, JSON carries arrays of rows.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_plant, CyclicSpec, DecayingSpec, PlantError, PlantModel};
use crate::Matrix;

pub const PLANT_SCHEMA: &str = "sparselq.plant/1";
pub const GENERATOR_SCHEMA: &str = "sparselq.generator/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed matrix: {0}")]
    Shape(String),
    #[error("unexpected schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: String },
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Row-major nested representation of a matrix.
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, IoError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Shape("ragged rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(IoError::Shape("non-finite entry".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Read a headerless row-major CSV matrix.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<Matrix, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| IoError::Shape(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    from_rows(&rows)
}

/// Write a headerless row-major CSV matrix using shortest round-trip floats.
pub fn write_matrix_csv<W: Write>(m: &Matrix, writer: W) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON envelope `{schema, n, m, A, B, Q, R}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlantEnvelope {
    pub schema: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

impl From<&PlantModel> for PlantEnvelope {
    fn from(p: &PlantModel) -> Self {
        Self {
            schema: PLANT_SCHEMA.into(),
            n: p.n(),
            m: p.m(),
            a: to_rows(p.a()),
            b: to_rows(p.b()),
            q: to_rows(p.q()),
            r: to_rows(p.r()),
        }
    }
}

impl PlantEnvelope {
    pub fn into_plant(self) -> Result<PlantModel, IoError> {
        if self.schema != PLANT_SCHEMA {
            return Err(IoError::Schema {
                found: self.schema,
                expected: PLANT_SCHEMA.into(),
            });
        }
        let a = from_rows(&self.a)?;
        let b = from_rows(&self.b)?;
        if a.nrows() != self.n || b.ncols() != self.m {
            return Err(IoError::Shape(format!(
                "declared n={}, m={} but A is {}x{} and B is {}x{}",
                self.n,
                self.m,
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(validate_plant(a, b, from_rows(&self.q)?, from_rows(&self.r)?)?)
    }
}

pub fn plant_to_json(p: &PlantModel) -> String {
    serde_json::to_string_pretty(&PlantEnvelope::from(p)).expect("plant envelope serializes")
}

pub fn plant_from_json(s: &str) -> Result<PlantModel, IoError> {
    serde_json::from_str::<PlantEnvelope>(s)?.into_plant()
}

/// Generator spec file accepted by `gen --spec`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Decaying(DecayingSpec),
    Cyclic(CyclicSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorFile {
    pub schema: String,
    #[serde(flatten)]
    pub spec: GeneratorSpec,
}

pub fn generator_from_json(s: &str) -> Result<GeneratorSpec, IoError> {
    let f: GeneratorFile = serde_json::from_str(s)?;
    if f.schema != GENERATOR_SCHEMA {
        return Err(IoError::Schema {
            found: f.schema,
            expected: GENERATOR_SCHEMA.into(),
        });
    }
    Ok(f.spec)
}
