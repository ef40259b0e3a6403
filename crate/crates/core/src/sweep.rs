//! Sampling-fraction sweeps: mask, tune, refit and score every
//! `(fraction, seed, method)` cell, and the CSV that records them.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::datagen::{make_samples, random_mask};
use crate::error::{invalid, Error, ParseErrorKind, Result};
use crate::io::format_value;
use crate::problems::nmse_unobserved;
use crate::rbf::Geometry;
use crate::tensor::DenseTensor;
use crate::tuning::{tune_and_reconstruct, Algorithm, CvConfig};

pub const CSV_HEADER: [&str; 6] = ["fraction", "seed", "method", "nmse_db", "wall_time_s", "params"];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResultRow {
    pub fraction: f64,
    pub seed: u64,
    pub method: String,
    /// `-inf` for a perfect reconstruction.
    pub nmse_db: f64,
    pub wall_time_s: f64,
    pub params: String,
}

impl SweepResultRow {
    /// Equality ignoring the wall time.
    pub fn same_result(&self, other: &Self) -> bool {
        self.fraction.to_bits() == other.fraction.to_bits()
            && self.seed == other.seed
            && self.method == other.method
            && self.nmse_db.to_bits() == other.nmse_db.to_bits()
            && self.params == other.params
    }

    fn record(&self) -> [String; 6] {
        [
            format_value(self.fraction),
            self.seed.to_string(),
            self.method.clone(),
            format_value(self.nmse_db),
            format!("{:.3}", self.wall_time_s),
            self.params.clone(),
        ]
    }
}

impl fmt::Display for SweepResultRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.record().join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    /// Template for every cell; its seed is replaced by the cell seed.
    pub cv: CvConfig,
}

/// Scores one cell: NMSE over all positions outside the mask.
pub fn run_cell(
    truth: &DenseTensor,
    geometry: &Geometry,
    fraction: f64,
    seed: u64,
    algorithm: Algorithm,
    cv: &CvConfig,
) -> Result<SweepResultRow> {
    let start = Instant::now();
    let mask = random_mask(truth.dims(), fraction, seed)?;
    let samples = make_samples(truth, &mask)?;
    let cv = CvConfig { seed, ..cv.clone() };
    let (estimate, best, _) = tune_and_reconstruct(algorithm, &samples, geometry, &cv)?;
    let nmse_db = nmse_unobserved(&estimate, truth, &samples)?;
    Ok(SweepResultRow {
        fraction,
        seed,
        method: algorithm.name().to_string(),
        nmse_db,
        wall_time_s: start.elapsed().as_secs_f64(),
        params: best.to_string(),
    })
}

/// Runs the full cross product. Cells run in parallel; rows come back in
/// `(fraction, seed, method)` order as listed in the config.
pub fn run_sweep(truth: &DenseTensor, geometry: &Geometry, config: &SweepConfig) -> Result<Vec<SweepResultRow>> {
    if config.fractions.is_empty() || config.seeds.is_empty() || config.algorithms.is_empty() {
        return Err(invalid("sweep needs at least one fraction, seed and method"));
    }
    let cells: Vec<(f64, u64, Algorithm)> = config
        .fractions
        .iter()
        .flat_map(|&f| {
            config
                .seeds
                .iter()
                .flat_map(move |&s| config.algorithms.iter().map(move |&a| (f, s, a)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(f, s, a)| run_cell(truth, geometry, f, s, a, &config.cv))
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            kind: ParseErrorKind::MissingHeader {
                expected: "fraction,seed,method,nmse_db,wall_time_s,params",
            },
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |tok: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            kind: ParseErrorKind::BadNumber(tok.into()),
        };
        let num = |i: usize| record[i].parse::<f64>().map_err(|_| err(&record[i]));
        rows.push(SweepResultRow {
            fraction: num(0)?,
            seed: record[1].parse().map_err(|_| err(&record[1]))?,
            method: record[2].to_string(),
            nmse_db: num(3)?,
            wall_time_s: num(4)?,
            params: record[5].to_string(),
        });
    }
    Ok(rows)
}
