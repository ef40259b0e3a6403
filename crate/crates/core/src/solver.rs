//! Douglas-Rachford splitting on the product space with λ continuation.
//!
//! A problem `min Σᵢ fᵢ(X)` over `M` terms is lifted to `M` copies of the
//! tensor space. The iteration is
//!
//! ```text
//! m       = mean(x)                      (prox of the consensus indicator)
//! p_i     = prox_{γ f_i}(2 m − x_i)
//! x_i    += t (p_i − m)
//! ```
//!
//! and the reconstruction reported is `mean(x)`. The data term is the only
//! operator that sees `λ`; the outer loop raises `λ` geometrically and
//! warm-starts each round from the previous state.

use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::prox::{consensus_mean, ProxOperator};
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub multiplier: f64,
    pub max_rounds: usize,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            initial: 0.1,
            multiplier: 10.0,
            max_rounds: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Prox parameter γ.
    pub gamma: f64,
    /// Relaxation `t`, held constant, in (0, 2].
    pub step: f64,
    pub max_inner_iters: usize,
    /// Threshold on `‖x_{n+1} − x_n‖ / max(1, ‖x_n‖)`.
    pub inner_tol: f64,
    pub lambda: LambdaSchedule,
    /// Threshold on the relative change of the reconstruction between rounds.
    pub outer_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            step: 1.0,
            max_inner_iters: 500,
            inner_tol: 1e-6,
            lambda: LambdaSchedule::default(),
            outer_tol: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("step", self.step)?;
        positive("inner_tol", self.inner_tol)?;
        positive("outer_tol", self.outer_tol)?;
        positive("initial lambda", self.lambda.initial)?;
        if self.step > 2.0 {
            return Err(invalid(format!("step must be <= 2, got {}", self.step)));
        }
        if !(self.lambda.multiplier > 1.0) || !self.lambda.multiplier.is_finite() {
            return Err(invalid(format!(
                "lambda multiplier must be > 1, got {}",
                self.lambda.multiplier
            )));
        }
        if self.max_inner_iters == 0 || self.lambda.max_rounds == 0 {
            return Err(invalid("iteration limits must be >= 1"));
        }
        Ok(())
    }
}

/// The DR iterate: `M` tensors of identical dims.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    blocks: Vec<DenseTensor>,
}

impl ProductState {
    pub fn new(blocks: Vec<DenseTensor>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| invalid("product state needs at least one block"))?;
        for b in &blocks {
            first.same_dims(b)?;
            if !b.is_finite() {
                return Err(invalid("product state block has non-finite values"));
            }
        }
        Ok(Self { blocks })
    }

    /// `M` copies of `t`.
    pub fn replicate(t: &DenseTensor, m: usize) -> Result<Self> {
        Self::new(vec![t.clone(); m])
    }

    pub fn blocks(&self) -> &[DenseTensor] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn mean(&self) -> DenseTensor {
        consensus_mean(&self.blocks).expect("blocks share dims by construction")
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &ProductState) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.distance(b).expect("same dims").powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.blocks.iter().all(DenseTensor::is_finite)
    }
}

struct StepOutcome {
    next: ProductState,
    /// `max_i ‖p_i − m‖ / max(1, ‖m‖)`.
    deviation: f64,
}

fn step_detailed(
    state: &ProductState,
    operators: &[Box<dyn ProxOperator>],
    gamma: f64,
    step: f64,
    lambda: f64,
) -> Result<StepOutcome> {
    if operators.len() != state.len() {
        return Err(invalid(format!(
            "{} operators for {} blocks",
            operators.len(),
            state.len()
        )));
    }
    let mean = state.mean();
    let shadows: Vec<DenseTensor> = operators
        .par_iter()
        .zip(state.blocks.par_iter())
        .map(|(op, x)| {
            let reflected = mean.scaled(2.0).sub(x)?;
            op.apply(&reflected, gamma, lambda)
        })
        .collect::<Result<_>>()?;
    let scale = mean.norm().max(1.0);
    let mut deviation: f64 = 0.0;
    let mut next = Vec::with_capacity(state.len());
    for (x, p) in state.blocks.iter().zip(&shadows) {
        let diff = p.sub(&mean)?;
        deviation = deviation.max(diff.norm() / scale);
        next.push(x.add_scaled(step, &diff)?);
    }
    Ok(StepOutcome {
        next: ProductState { blocks: next },
        deviation,
    })
}

/// One DR step `x + t (prox_{γf}(2 prox_{γg} x − x) − prox_{γg} x)` with
/// `prox_{γg}` the consensus mean.
pub fn dr_step(
    state: &ProductState,
    operators: &[Box<dyn ProxOperator>],
    gamma: f64,
    step: f64,
    lambda: f64,
) -> Result<ProductState> {
    Ok(step_detailed(state, operators, gamma, step, lambda)?.next)
}

/// Misfit and objective of a reconstruction, for reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub misfit: f64,
    pub objective: f64,
}

pub type Evaluator = Box<dyn Fn(&DenseTensor, f64) -> Result<Evaluation> + Send + Sync>;

/// Everything `solve` needs: the ordered operators, the starting tensor
/// (replicated into every block), and an optional evaluator for the report.
pub struct SplittingProblem {
    pub operators: Vec<Box<dyn ProxOperator>>,
    pub initial: DenseTensor,
    /// Position of the single operator that takes the scheduled λ.
    pub lambda_index: Option<usize>,
    pub evaluator: Option<Evaluator>,
}

impl SplittingProblem {
    fn validate(&self) -> Result<()> {
        if self.operators.is_empty() {
            return Err(invalid("splitting problem has no operators"));
        }
        for (i, op) in self.operators.iter().enumerate() {
            let expected = self.lambda_index == Some(i);
            if op.uses_lambda() != expected {
                return Err(invalid(format!(
                    "operator {} ({}) {} lambda but lambda index is {:?}",
                    i,
                    op.name(),
                    if op.uses_lambda() { "uses" } else { "ignores" },
                    self.lambda_index
                )));
            }
        }
        if let Some(i) = self.lambda_index {
            if i >= self.operators.len() {
                return Err(invalid(format!("lambda index {i} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub lambda: f64,
    pub inner_iterations: usize,
    /// Relative fixed-point residual after every inner step, as observed.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub misfit: f64,
    pub objective: f64,
    pub consensus_deviation: f64,
    /// Relative change of the reconstruction since the previous round.
    pub change: Option<f64>,
}

impl RoundRecord {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Reconstruction stopped changing between λ rounds.
    OuterConverged,
    /// The λ schedule ran out.
    MaxRounds,
    /// No operator depends on λ, so one round is final.
    NoContinuation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverReport {
    pub rounds: Vec<RoundRecord>,
    pub termination: Termination,
}

impl SolverReport {
    pub fn last_round(&self) -> &RoundRecord {
        self.rounds.last().expect("solve records at least one round")
    }

    pub fn total_iterations(&self) -> usize {
        self.rounds.iter().map(|r| r.inner_iterations).sum()
    }
}

impl fmt::Display for SolverReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "termination: {:?}", self.termination)?;
        writeln!(
            f,
            "round lambda iterations converged residual misfit objective deviation change"
        )?;
        for (i, r) in self.rounds.iter().enumerate() {
            let change = r.change.map_or("-".to_string(), |c| format!("{c:.6e}"));
            writeln!(
                f,
                "{} {:e} {} {} {:.6e} {:.6e} {:.6e} {:.6e} {}",
                i + 1,
                r.lambda,
                r.inner_iterations,
                r.converged,
                r.final_residual(),
                r.misfit,
                r.objective,
                r.consensus_deviation,
                change
            )?;
        }
        Ok(())
    }
}

/// Runs DR with λ continuation and returns the consensus mean of the final
/// state along with per-round diagnostics.
pub fn solve(problem: &SplittingProblem, config: &SolverConfig) -> Result<(DenseTensor, SolverReport)> {
    config.validate()?;
    problem.validate()?;
    let m = problem.operators.len();
    let mut state = ProductState::replicate(&problem.initial, m)?;
    let mut lambda = config.lambda.initial;
    let mut previous: Option<DenseTensor> = None;
    let mut rounds = Vec::new();
    let mut termination = Termination::MaxRounds;

    for round in 1..=config.lambda.max_rounds {
        let mut residuals = Vec::new();
        let mut converged = false;
        let mut deviation = 0.0;
        for iteration in 1..=config.max_inner_iters {
            let outcome = step_detailed(&state, &problem.operators, config.gamma, config.step, lambda)?;
            if !outcome.next.is_finite() {
                return Err(Error::Divergence {
                    round,
                    iteration,
                    lambda,
                });
            }
            let residual = outcome.next.distance(&state) / state.norm().max(1.0);
            residuals.push(residual);
            deviation = outcome.deviation;
            state = outcome.next;
            if residual < config.inner_tol {
                converged = true;
                break;
            }
        }
        let reconstruction = state.mean();
        let evaluation = match &problem.evaluator {
            Some(eval) => eval(&reconstruction, lambda)?,
            None => Evaluation {
                misfit: f64::NAN,
                objective: f64::NAN,
            },
        };
        let change = previous
            .as_ref()
            .map(|p| reconstruction.distance(p).map(|d| d / p.norm().max(1.0)))
            .transpose()?;
        rounds.push(RoundRecord {
            lambda,
            inner_iterations: residuals.len(),
            residuals,
            converged,
            misfit: evaluation.misfit,
            objective: evaluation.objective,
            consensus_deviation: deviation,
            change,
        });
        if problem.lambda_index.is_none() {
            termination = Termination::NoContinuation;
            break;
        }
        if change.is_some_and(|c| c < config.outer_tol) {
            termination = Termination::OuterConverged;
            break;
        }
        previous = Some(reconstruction);
        lambda *= config.lambda.multiplier;
    }

    Ok((state.mean(), SolverReport { rounds, termination }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{DataFidelityProx, IdentityProx};
    use crate::samples::SampleSet;

    /// prox of ½‖x − a‖²: (x + γa) / (1 + γ).
    struct Quadratic(DenseTensor);

    impl ProxOperator for Quadratic {
        fn apply(&self, x: &DenseTensor, gamma: f64, _lambda: f64) -> Result<DenseTensor> {
            Ok(x.add_scaled(gamma, &self.0)?.scaled(1.0 / (1.0 + gamma)))
        }

        fn name(&self) -> String {
            "quadratic".into()
        }
    }

    fn sample_tensor() -> DenseTensor {
        DenseTensor::from_fn(&[3, 4], |i| (i[0] as f64 - 1.0) * 2.5 + (i[1] * i[1]) as f64).unwrap()
    }

    #[test]
    fn identity_operators_leave_state_unchanged() {
        // The g-prox is the consensus projection, so only consensus states are fixed.
        let state = ProductState::replicate(&sample_tensor().scaled(-0.5), 3).unwrap();
        let ops: Vec<Box<dyn ProxOperator>> = vec![Box::new(IdentityProx), Box::new(IdentityProx), Box::new(IdentityProx)];
        let next = dr_step(&state, &ops, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn consensus_fixed_point_has_zero_residual() {
        let state = ProductState::replicate(&sample_tensor(), 2).unwrap();
        let ops: Vec<Box<dyn ProxOperator>> = vec![Box::new(IdentityProx), Box::new(IdentityProx)];
        let next = dr_step(&state, &ops, 0.7, 1.5, 1.0).unwrap();
        assert_eq!(next.distance(&state), 0.0);
    }

    #[test]
    fn single_quadratic_converges_to_center() {
        let a = sample_tensor();
        let ops: Vec<Box<dyn ProxOperator>> = vec![Box::new(Quadratic(a.clone()))];
        let mut state = ProductState::replicate(&DenseTensor::filled(&[3, 4], 40.0).unwrap(), 1).unwrap();
        for _ in 0..200 {
            state = dr_step(&state, &ops, 1.0, 1.0, 1.0).unwrap();
        }
        assert!(state.blocks()[0].distance(&a).unwrap() <= 1e-6 * (1.0 + a.norm()));
    }

    #[test]
    fn step_checks_operator_count() {
        let state = ProductState::replicate(&sample_tensor(), 2).unwrap();
        let ops: Vec<Box<dyn ProxOperator>> = vec![Box::new(IdentityProx)];
        assert!(dr_step(&state, &ops, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn identity_only_problem_returns_initial_after_one_round() {
        let problem = SplittingProblem {
            operators: vec![Box::new(IdentityProx)],
            initial: sample_tensor(),
            lambda_index: None,
            evaluator: None,
        };
        let (x, report) = solve(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(x, sample_tensor());
        assert_eq!(report.rounds.len(), 1);
        assert_eq!(report.rounds[0].inner_iterations, 1);
        assert_eq!(report.rounds[0].final_residual(), 0.0);
        assert_eq!(report.termination, Termination::NoContinuation);
    }

    #[test]
    fn full_sampling_fidelity_recovers_data() {
        let a = sample_tensor();
        let samples = SampleSet::from_offsets(a.dims(), (0..a.len()).collect(), a.values().to_vec()).unwrap();
        let problem = SplittingProblem {
            operators: vec![Box::new(DataFidelityProx { samples }), Box::new(IdentityProx)],
            initial: DenseTensor::zeros(a.dims()).unwrap(),
            lambda_index: Some(0),
            evaluator: None,
        };
        let (x, report) = solve(&problem, &SolverConfig::default()).unwrap();
        assert!(x.distance(&a).unwrap() <= 1e-5 * (1.0 + a.norm()), "{report}");
    }

    #[test]
    fn lambda_index_must_match_operators() {
        let samples = SampleSet::empty(&[3, 4]).unwrap();
        let problem = SplittingProblem {
            operators: vec![Box::new(IdentityProx), Box::new(DataFidelityProx { samples })],
            initial: sample_tensor(),
            lambda_index: Some(0),
            evaluator: None,
        };
        assert!(matches!(solve(&problem, &SolverConfig::default()), Err(Error::InvalidArgument(_))));
    }

    struct Explode;

    impl ProxOperator for Explode {
        fn apply(&self, x: &DenseTensor, _gamma: f64, _lambda: f64) -> Result<DenseTensor> {
            Ok(x.scaled(f64::INFINITY))
        }

        fn name(&self) -> String {
            "explode".into()
        }
    }

    #[test]
    fn divergence_is_reported() {
        let problem = SplittingProblem {
            operators: vec![Box::new(Explode)],
            initial: sample_tensor(),
            lambda_index: None,
            evaluator: None,
        };
        assert!(matches!(
            solve(&problem, &SolverConfig::default()),
            Err(Error::Divergence { round: 1, iteration: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.step = 2.5;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.lambda.multiplier = 1.0;
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}
