//! Penalty sweeps over α₁, tradeoff statistics and log-magnitude spectra.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{synthesize, SynthesisParams, SynthesisStatus};
use crate::model::PlantModel;
use crate::Matrix;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("alpha1 list must be nonempty and strictly increasing")]
    InvalidGrid,
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("floor must be negative, got {0}")]
    InvalidFloor(f64),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Converged,
    IterationCap,
    StalledInfeasible,
    /// Synthesis returned an error before producing any iterate.
    Failed,
}

impl From<SynthesisStatus> for RowStatus {
    fn from(s: SynthesisStatus) -> Self {
        match s {
            SynthesisStatus::Converged => Self::Converged,
            SynthesisStatus::IterationCap => Self::IterationCap,
            SynthesisStatus::StalledInfeasible => Self::StalledInfeasible,
        }
    }
}

/// One row of a cost/cardinality table. Cost fields are empty for failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha1: f64,
    #[serde(rename = "J_opt")]
    pub j_opt: Option<f64>,
    #[serde(rename = "J_eval")]
    pub j_eval: Option<f64>,
    pub card: Option<usize>,
    /// `(J - J_lqr) / J_lqr * 100`, with `J = J_eval` when stabilizing.
    pub degradation_pct: Option<f64>,
    /// `card / (n m) * 100`.
    pub sparsity_pct: Option<f64>,
    pub iters: usize,
    pub status: RowStatus,
    pub wall_ms: u64,
}

impl SweepRecord {
    /// The cost used for tables: `J_eval` if stabilizing, else `J_opt`.
    pub fn cost(&self) -> Option<f64> {
        self.j_eval.or(self.j_opt)
    }
}

/// The α₁ grid of the reference table: 0.001..0.01, 0.02..0.1, 0.2..1, 2..10.
pub fn table_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (1..=10).map(|k| k as f64 / 1000.0).collect();
    g.extend((2..=10).map(|k| k as f64 / 100.0));
    g.extend((2..=10).map(|k| k as f64 / 10.0));
    g.extend((2..=10).map(|k| k as f64));
    g
}

fn run_row(plant: &PlantModel, base: &SynthesisParams, alpha1: f64) -> SweepRecord {
    let params = SynthesisParams { alpha1, ..*base };
    let start = Instant::now();
    let result = synthesize(plant, &params);
    let wall_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(r) => {
            let j_lqr = r.j_lqr;
            let cost = r.reported_cost();
            SweepRecord {
                alpha1,
                j_opt: Some(r.j_opt),
                j_eval: r.j_eval,
                card: Some(r.cardinality),
                degradation_pct: Some((cost - j_lqr) / j_lqr * 100.0),
                sparsity_pct: Some(r.cardinality as f64 / (plant.n() * plant.m()) as f64 * 100.0),
                iters: r.accepted_iterations(),
                status: r.status.into(),
                wall_ms,
            }
        }
        Err(_) => SweepRecord {
            alpha1,
            j_opt: None,
            j_eval: None,
            card: None,
            degradation_pct: None,
            sparsity_pct: None,
            iters: 0,
            status: RowStatus::Failed,
            wall_ms,
        },
    }
}

/// One synthesis per α₁ with everything else fixed; rows come back in input
/// order. `workers = 0` uses the global rayon pool.
pub fn sweep(
    plant: &PlantModel,
    base: &SynthesisParams,
    alpha1_list: &[f64],
    workers: usize,
) -> Result<Vec<SweepRecord>, HarnessError> {
    if alpha1_list.is_empty() || alpha1_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::InvalidGrid);
    }
    let rows = || {
        alpha1_list
            .par_iter()
            .map(|&a| run_row(plant, base, a))
            .collect::<Vec<_>>()
    };
    if workers == 0 {
        return Ok(rows());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(rows))
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<_>, _>>()?)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // Average rank for ties.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. NaN if either
/// series is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Number of adjacent steps where a should-be-nonincreasing column rises.
pub fn count_rises(v: &[usize]) -> usize {
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Number of adjacent steps where a should-be-nondecreasing column drops by
/// more than `slack`.
pub fn count_drops(v: &[f64], slack: f64) -> usize {
    v.windows(2).filter(|w| w[1] < w[0] - slack).count()
}

/// 8-bit log-magnitude image of a matrix plus the raw `log10|M_ij|` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    /// Row-major gray levels.
    pub pixels: Vec<u8>,
    /// `log10|M_ij|`; `-inf` for exact zeros.
    pub log_values: Matrix,
}

pub const DEFAULT_FLOOR: f64 = -8.0;

/// Gray level `255 * (clamp(log10|m|) - floor) / (max - floor)`; entries at
/// or below the floor, and exact zeros, map to 0.
pub fn emit_spectrum(m: &Matrix, floor_db: f64) -> Result<Spectrum, HarnessError> {
    if m.is_empty() {
        return Err(HarnessError::EmptyMatrix);
    }
    if !(floor_db < 0.0) {
        return Err(HarnessError::InvalidFloor(floor_db));
    }
    let log_values = m.map(|v| v.abs().log10());
    let top = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = top - floor_db;
    let mut pixels = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let l = log_values[(i, j)];
            let g = if !(l > floor_db) || span <= 0.0 {
                0
            } else {
                ((l.min(top) - floor_db) / span * 255.0).round() as u8
            };
            pixels.push(g);
        }
    }
    Ok(Spectrum {
        width: m.ncols(),
        height: m.nrows(),
        pixels,
        log_values,
    })
}

impl Spectrum {
    /// Binary P5 graymap.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        crate::io::write_matrix_csv(&self.log_values, writer).map_err(|e| match e {
            crate::io::IoError::Io(e) => HarnessError::Io(e),
            crate::io::IoError::Csv(e) => HarnessError::Csv(e),
            other => HarnessError::Io(std::io::Error::other(other.to_string())),
        })
    }
}
