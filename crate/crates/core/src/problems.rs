//! The three completion objectives, their operator lists, objective values
//! and the NMSE metric.
//!
//! ```text
//! Rank:      Σ ‖X_(i)‖_*                 + λ/2 ‖A(X) − b‖²
//! L2TVRank:  Σ α_i Tv₂(X_(i)) + Σ ‖X_(i)‖_* + λ/2 ‖A(X) − b‖²
//! L1TVRank:  Σ α_i Tv₁(X_(i)) + Σ ‖X_(i)‖_* + λ/2 ‖A(X) − b‖²
//! ```
//!
//! TV terms take differences along every mode-`i` fiber.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::prox::{
    nuclear_norm, DataFidelityProx, L1TvProx, L2TvProx, NuclearNormProx, ProxOperator,
};
use crate::samples::SampleSet;
use crate::solver::{solve, Evaluation, SolverConfig, SolverReport, SplittingProblem};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Rank,
    L2TvRank,
    L1TvRank,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rank => "rank",
            Method::L2TvRank => "l2tv",
            Method::L1TvRank => "l1tv",
        }
    }

    pub fn has_tv(self) -> bool {
        !matches!(self, Method::Rank)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(Method::Rank),
            "l2tv" => Ok(Method::L2TvRank),
            "l1tv" => Ok(Method::L1TvRank),
            other => Err(invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub method: Method,
    /// One weight per mode for the TV methods; ignored for `Rank`.
    pub alphas: Vec<f64>,
    /// Row-sum rescaling of the L2-TV map. Only meaningful for `L2TvRank`.
    pub heuristic: bool,
    pub solver: SolverConfig,
}

impl ProblemSpec {
    pub fn rank(solver: SolverConfig) -> Self {
        Self {
            method: Method::Rank,
            alphas: Vec::new(),
            heuristic: false,
            solver,
        }
    }

    pub fn l2tv(alphas: Vec<f64>, heuristic: bool, solver: SolverConfig) -> Self {
        Self {
            method: Method::L2TvRank,
            alphas,
            heuristic,
            solver,
        }
    }

    pub fn l1tv(alphas: Vec<f64>, solver: SolverConfig) -> Self {
        Self {
            method: Method::L1TvRank,
            alphas,
            heuristic: false,
            solver,
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.method.has_tv() {
            if self.alphas.len() != order {
                return Err(invalid(format!(
                    "{} needs {order} alpha values (one per mode), got {}",
                    self.method,
                    self.alphas.len()
                )));
            }
            if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
                return Err(invalid(format!("alpha values must be finite and >= 0, got {a}")));
            }
        }
        if self.heuristic && self.method != Method::L2TvRank {
            return Err(invalid(format!("the row-sum heuristic does not apply to {}", self.method)));
        }
        self.solver.validate()
    }
}

/// Operators in fixed order: TV terms (modes 1..N), nuclear norms (modes
/// 1..N), data fidelity last.
pub fn build_prox_list(
    spec: &ProblemSpec,
    dims: &[usize],
    samples: &SampleSet,
) -> Result<Vec<Box<dyn ProxOperator>>> {
    samples.check_dims(dims)?;
    let order = dims.len();
    spec.validate(order)?;
    let mut ops: Vec<Box<dyn ProxOperator>> = Vec::with_capacity(2 * order + 1);
    match spec.method {
        Method::Rank => {}
        Method::L2TvRank => {
            for (mode, &alpha) in spec.alphas.iter().enumerate() {
                ops.push(Box::new(L2TvProx::new(mode, alpha, spec.heuristic)?));
            }
        }
        Method::L1TvRank => {
            for (mode, &alpha) in spec.alphas.iter().enumerate() {
                ops.push(Box::new(L1TvProx { mode, alpha }));
            }
        }
    }
    for mode in 0..order {
        ops.push(Box::new(NuclearNormProx { mode }));
    }
    ops.push(Box::new(DataFidelityProx {
        samples: samples.clone(),
    }));
    Ok(ops)
}

/// Operator list plus the `A*(b)` starting point and an objective evaluator.
pub fn build_problem(spec: &ProblemSpec, samples: &SampleSet) -> Result<SplittingProblem> {
    let operators = build_prox_list(spec, samples.dims(), samples)?;
    let lambda_index = Some(operators.len() - 1);
    let eval_spec = spec.clone();
    let eval_samples = samples.clone();
    Ok(SplittingProblem {
        operators,
        initial: samples.scatter(),
        lambda_index,
        evaluator: Some(Box::new(move |x, lambda| {
            Ok(Evaluation {
                misfit: eval_samples.misfit(x)?,
                objective: objective_value(&eval_spec, x, &eval_samples, lambda)?,
            })
        })),
    })
}

/// Solves `spec` on `samples`.
pub fn complete(spec: &ProblemSpec, samples: &SampleSet) -> Result<(DenseTensor, SolverReport)> {
    solve(&build_problem(spec, samples)?, &spec.solver)
}

fn fiber_differences(t: &DenseTensor, mode: usize, mut f: impl FnMut(f64)) -> Result<()> {
    t.map_fibers(mode, |x, y| {
        for w in x.windows(2) {
            f(w[1] - w[0]);
        }
        y.copy_from_slice(x);
        Ok(())
    })?;
    Ok(())
}

/// `Σ (x_{k+1} − x_k)²` over all mode-`mode` fibers.
pub fn tv2(t: &DenseTensor, mode: usize) -> Result<f64> {
    let mut sum = 0.0;
    fiber_differences(t, mode, |d| sum += d * d)?;
    Ok(sum)
}

/// `Σ |x_{k+1} − x_k|` over all mode-`mode` fibers.
pub fn tv1(t: &DenseTensor, mode: usize) -> Result<f64> {
    let mut sum = 0.0;
    fiber_differences(t, mode, |d| sum += d.abs())?;
    Ok(sum)
}

/// Objective of `spec` at `x` for data weight `lambda`.
pub fn objective_value(
    spec: &ProblemSpec,
    x: &DenseTensor,
    samples: &SampleSet,
    lambda: f64,
) -> Result<f64> {
    samples.check_dims(x.dims())?;
    let order = x.order();
    if spec.method.has_tv() && spec.alphas.len() != order {
        return Err(invalid(format!(
            "{} needs {order} alpha values, got {}",
            spec.method,
            spec.alphas.len()
        )));
    }
    let mut total = 0.0;
    for mode in 0..order {
        total += match spec.method {
            Method::Rank => 0.0,
            Method::L2TvRank => spec.alphas[mode] * tv2(x, mode)?,
            Method::L1TvRank => spec.alphas[mode] * tv1(x, mode)?,
        };
        total += nuclear_norm(x.unfold(mode)?.matrix())?;
    }
    Ok(total + 0.5 * lambda * samples.misfit(x)?.powi(2))
}

/// `10 log₁₀(Σ (x̂ − x)² / Σ x²)` over the given storage offsets, or
/// negative infinity when the estimate is exact there.
pub fn nmse_db(estimate: &DenseTensor, truth: &DenseTensor, holdout: &[usize]) -> Result<f64> {
    estimate.same_dims(truth)?;
    if let Some(o) = holdout.iter().find(|&&o| o >= truth.len()) {
        return Err(invalid(format!("holdout offset {o} out of range")));
    }
    nmse_from_pairs(holdout.iter().map(|&o| (estimate.values()[o], truth.values()[o])))
}

/// NMSE of `estimate` against held-out sample values.
pub fn nmse_samples(estimate: &DenseTensor, holdout: &SampleSet) -> Result<f64> {
    let predicted = holdout.gather(estimate)?;
    nmse_from_pairs(predicted.into_iter().zip(holdout.values().iter().copied()))
}

fn nmse_from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Result<f64> {
    let mut count = 0usize;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, t) in pairs {
        count += 1;
        num += (e - t) * (e - t);
        den += t * t;
    }
    if count == 0 {
        return Err(invalid("NMSE over an empty index set"));
    }
    if num == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    Ok(10.0 * (num / den).log10())
}

/// NMSE over every position not in `samples`.
pub fn nmse_unobserved(estimate: &DenseTensor, truth: &DenseTensor, samples: &SampleSet) -> Result<f64> {
    samples.check_dims(truth.dims())?;
    nmse_db(estimate, truth, &samples.unobserved_offsets())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn operator_counts() {
        let dims = [3, 4, 2];
        let s = SampleSet::empty(&dims).unwrap();
        assert_eq!(build_prox_list(&ProblemSpec::rank(cfg()), &dims, &s).unwrap().len(), 4);
        let l2 = ProblemSpec::l2tv(vec![0.1; 3], true, cfg());
        let ops = build_prox_list(&l2, &dims, &s).unwrap();
        assert_eq!(ops.len(), 7);
        let names: Vec<String> = ops.iter().map(|o| o.name()).collect();
        assert_eq!(names[0], "l2tv[1]");
        assert_eq!(names[3], "nuclear[1]");
        assert_eq!(names[6], "data");
        assert_eq!(build_prox_list(&ProblemSpec::l1tv(vec![0.0; 3], cfg()), &dims, &s).unwrap().len(), 7);
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let dims = [3, 4];
        let s = SampleSet::empty(&dims).unwrap();
        assert!(build_prox_list(&ProblemSpec::l2tv(vec![0.1], false, cfg()), &dims, &s).is_err());
        assert!(build_prox_list(&ProblemSpec::l1tv(vec![0.1, -1.0], cfg()), &dims, &s).is_err());
        let mut bad = ProblemSpec::rank(cfg());
        bad.heuristic = true;
        assert!(build_prox_list(&bad, &dims, &s).is_err());
        let other = SampleSet::empty(&[4, 3]).unwrap();
        assert!(build_prox_list(&ProblemSpec::rank(cfg()), &dims, &other).is_err());
    }

    #[test]
    fn objective_of_zero_and_constant() {
        let dims = [3, 2, 2];
        let s = SampleSet::empty(&dims).unwrap();
        let zero = DenseTensor::zeros(&dims).unwrap();
        assert_eq!(objective_value(&ProblemSpec::rank(cfg()), &zero, &s, 5.0).unwrap(), 0.0);
        let c = DenseTensor::filled(&dims, 2.0).unwrap();
        let spec = ProblemSpec::l2tv(vec![1.0, 2.0, 3.0], true, cfg());
        // All-constant tensor: each unfolding is rank one with σ = 2·sqrt(12).
        let expected = 3.0 * 2.0 * 12f64.sqrt();
        assert!((objective_value(&spec, &c, &s, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn objective_small_l1tv_case() {
        // 1x2 matrix [0, 4]: mode-1 fibers have length 1 (no TV); the one
        // mode-2 fiber contributes |4 − 0|. Both unfoldings are rank one with
        // σ = 4.
        let x = DenseTensor::new(vec![1, 2], vec![0.0, 4.0]).unwrap();
        let s = SampleSet::empty(&[1, 2]).unwrap();
        let spec = ProblemSpec::l1tv(vec![1.0, 1.0], cfg());
        assert!((objective_value(&spec, &x, &s, 0.0).unwrap() - 12.0).abs() < 1e-12);
        assert_eq!(tv1(&x, 0).unwrap(), 0.0);
        assert_eq!(tv1(&x, 1).unwrap(), 4.0);
        assert_eq!(tv2(&x, 1).unwrap(), 16.0);
    }

    #[test]
    fn objective_includes_data_term() {
        let x = DenseTensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        let s = SampleSet::new(&[2], vec![(vec![0], 3.0)]).unwrap();
        // ‖x‖_* = sqrt(2), misfit 2.
        let v = objective_value(&ProblemSpec::rank(cfg()), &x, &s, 0.5).unwrap();
        assert!((v - (2f64.sqrt() + 0.25 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn nmse_examples() {
        let truth = DenseTensor::new(vec![3], vec![10.0, -4.0, 2.0]).unwrap();
        assert_eq!(nmse_db(&truth, &truth, &[0, 1]).unwrap(), f64::NEG_INFINITY);
        let zero = DenseTensor::zeros(&[3]).unwrap();
        assert_eq!(nmse_db(&zero, &truth, &[0, 1, 2]).unwrap(), 0.0);
        let est = DenseTensor::new(vec![3], vec![11.0, 0.0, 0.0]).unwrap();
        assert!((nmse_db(&est, &truth, &[0]).unwrap() + 20.0).abs() < 1e-12);
        let zt = DenseTensor::zeros(&[3]).unwrap();
        assert!(matches!(nmse_db(&truth, &zt, &[0]), Err(Error::UndefinedMetric)));
        assert!(nmse_db(&truth, &truth, &[]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Rank, Method::L2TvRank, Method::L1TvRank] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("rbf".parse::<Method>().is_err());
    }
}
