//! Holdout cross-validation and grid search over regularization weights
//! (TV methods) or the multiquadric shape parameter (RBF).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::datagen::mask_count;
use crate::error::{invalid, Error, Result};
use crate::problems::{complete, nmse_samples, Method, ProblemSpec};
use crate::rbf::{reconstruct_rbf, Geometry};
use crate::rng::{PortableRng, Stream};
use crate::samples::SampleSet;
use crate::solver::SolverConfig;
use crate::tensor::DenseTensor;

/// Per-mode values the default α grid draws from.
pub const DEFAULT_ALPHA_VALUES: [f64; 5] = [0.0, 1e-3, 1e-2, 1e-1, 1.0];

/// Cap on the size of a per-mode Cartesian α grid.
pub const DEFAULT_GRID_LIMIT: usize = 125;

/// A reconstruction algorithm as exposed to users.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Rank,
    L2Tv { heuristic: bool },
    L1Tv,
    Rbf,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rank => "rank",
            Algorithm::L2Tv { .. } => "l2tv",
            Algorithm::L1Tv => "l1tv",
            Algorithm::Rbf => "rbf",
        }
    }

    pub fn method(self) -> Option<Method> {
        match self {
            Algorithm::Rank => Some(Method::Rank),
            Algorithm::L2Tv { .. } => Some(Method::L2TvRank),
            Algorithm::L1Tv => Some(Method::L1TvRank),
            Algorithm::Rbf => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// `l2tv` parses with the heuristic on.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(Algorithm::Rank),
            "l2tv" => Ok(Algorithm::L2Tv { heuristic: true }),
            "l1tv" => Ok(Algorithm::L1Tv),
            "rbf" => Ok(Algorithm::Rbf),
            other => Err(invalid(format!("unknown method `{other}` (expected rank, l2tv, l1tv or rbf)"))),
        }
    }
}

/// One point of a tuning grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    /// No tunable parameters (`rank`).
    Fixed,
    Alphas(Vec<f64>),
    Epsilon(f64),
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Fixed => f.write_str("-"),
            Candidate::Alphas(a) => {
                let parts: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                write!(f, "alpha={}", parts.join(" "))
            }
            Candidate::Epsilon(e) => write!(f, "epsilon={e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub holdout_fraction: f64,
    pub alpha_grid: Vec<Vec<f64>>,
    pub epsilon_grid: Vec<f64>,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl CvConfig {
    /// 25% holdout, shared-α default grid and the default ε grid for `geometry`.
    pub fn with_defaults(geometry: &Geometry, seed: u64) -> Self {
        Self {
            holdout_fraction: 0.25,
            alpha_grid: default_alpha_grid(geometry.axes().len(), true, DEFAULT_GRID_LIMIT),
            epsilon_grid: default_epsilon_grid(geometry),
            seed,
            solver: SolverConfig::default(),
        }
    }
}

/// α vectors from [`DEFAULT_ALPHA_VALUES`]: one value shared by all modes
/// when `shared`, otherwise the per-mode Cartesian product (in lexicographic
/// order, first mode slowest) truncated to `limit` entries.
pub fn default_alpha_grid(order: usize, shared: bool, limit: usize) -> Vec<Vec<f64>> {
    if shared {
        return DEFAULT_ALPHA_VALUES.iter().map(|&a| vec![a; order]).collect();
    }
    let k = DEFAULT_ALPHA_VALUES.len();
    let total = k.checked_pow(order as u32).unwrap_or(usize::MAX);
    (0..total.min(limit))
        .map(|mut n| {
            let mut v = vec![0.0; order];
            for slot in v.iter_mut().rev() {
                *slot = DEFAULT_ALPHA_VALUES[n % k];
                n /= k;
            }
            v
        })
        .collect()
}

/// `ε = d · 2^k` for `k = −6..=1`, `d` the grid diameter (at least 1).
pub fn default_epsilon_grid(geometry: &Geometry) -> Vec<f64> {
    let d = geometry.diameter().max(1.0);
    (-6..=1).map(|k| d * 2f64.powi(k)).collect()
}

/// Splits off `round(fraction · |samples|)` entries at random as a test set.
/// Both parts keep the original entry order.
pub fn holdout_split(samples: &SampleSet, fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let n = samples.len();
    let test_count = mask_count(n, fraction);
    if test_count == 0 || test_count == n {
        return Err(invalid(format!(
            "holdout fraction {fraction} of {n} samples leaves the train or test set empty"
        )));
    }
    let mut rng = PortableRng::new(seed, Stream::Holdout);
    let mut is_test = vec![false; n];
    for p in rng.sample_without_replacement(n, test_count) {
        is_test[p] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&p| is_test[p]);
    Ok((samples.select(&train)?, samples.select(&test)?))
}

/// The grid a given algorithm searches.
pub fn candidates(algorithm: Algorithm, cv: &CvConfig) -> Vec<Candidate> {
    match algorithm {
        Algorithm::Rank => vec![Candidate::Fixed],
        Algorithm::L2Tv { .. } | Algorithm::L1Tv => cv.alpha_grid.iter().cloned().map(Candidate::Alphas).collect(),
        Algorithm::Rbf => cv.epsilon_grid.iter().copied().map(Candidate::Epsilon).collect(),
    }
}

/// Runs one algorithm with fixed parameters on `samples`.
pub fn reconstruct(
    algorithm: Algorithm,
    candidate: &Candidate,
    samples: &SampleSet,
    geometry: &Geometry,
    solver: &SolverConfig,
) -> Result<DenseTensor> {
    let mismatch = || invalid(format!("parameters `{candidate}` do not fit method {algorithm}"));
    let spec = match (algorithm, candidate) {
        (Algorithm::Rbf, Candidate::Epsilon(e)) => return reconstruct_rbf(samples, geometry, *e),
        (Algorithm::Rank, Candidate::Fixed) => ProblemSpec::rank(solver.clone()),
        (Algorithm::L2Tv { heuristic }, Candidate::Alphas(a)) => ProblemSpec::l2tv(a.clone(), heuristic, solver.clone()),
        (Algorithm::L1Tv, Candidate::Alphas(a)) => ProblemSpec::l1tv(a.clone(), solver.clone()),
        _ => return Err(mismatch()),
    };
    Ok(complete(&spec, samples)?.0)
}

/// One row of the cross-validation table.
#[derive(Clone, Debug, PartialEq)]
pub struct CvRecord {
    pub candidate: Candidate,
    /// Holdout NMSE, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

/// Scores every candidate on a holdout split and returns the best one (ties
/// go to the earliest) with the full table in grid order.
pub fn grid_search(
    algorithm: Algorithm,
    samples: &SampleSet,
    geometry: &Geometry,
    cv: &CvConfig,
) -> Result<(Candidate, Vec<CvRecord>)> {
    let grid = candidates(algorithm, cv);
    if grid.is_empty() {
        return Err(invalid(format!("empty parameter grid for {algorithm}")));
    }
    let (train, test) = holdout_split(samples, cv.holdout_fraction, cv.seed)?;
    debug_assert!(train.is_disjoint(&test));
    let table: Vec<CvRecord> = grid
        .into_par_iter()
        .map(|candidate| {
            let outcome = reconstruct(algorithm, &candidate, &train, geometry, &cv.solver)
                .and_then(|estimate| nmse_samples(&estimate, &test))
                .map_err(|e| e.to_string());
            CvRecord { candidate, outcome }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, record) in table.iter().enumerate() {
        if let Ok(score) = record.outcome {
            if !score.is_nan() && best.is_none_or(|(_, b)| score < b) {
                best = Some((i, score));
            }
        }
    }
    match best {
        Some((i, _)) => Ok((table[i].candidate.clone(), table)),
        None => Err(Error::TuningFailed { table }),
    }
}

/// Grid search followed by a refit on all samples with the chosen parameters.
pub fn tune_and_reconstruct(
    algorithm: Algorithm,
    samples: &SampleSet,
    geometry: &Geometry,
    cv: &CvConfig,
) -> Result<(DenseTensor, Candidate, Vec<CvRecord>)> {
    let (best, table) = grid_search(algorithm, samples, geometry, cv)?;
    let estimate = reconstruct(algorithm, &best, samples, geometry, &cv.solver)?;
    Ok((estimate, best, table))
}
