//! `radiomap`: generate, sample, complete, tune, evaluate and sweep radio maps.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radiomap_core::datagen::{make_samples, random_mask, synthetic_map, SyntheticSpec};
use radiomap_core::io::{
    export_grid_csv, format_value, ingest_grid_csv, read_grid_spec, read_samples, read_tensor, read_tensor_file,
    write_samples, write_tensor_with_scale, ColumnMap, GridData,
};
use radiomap_core::problems::{self, nmse_unobserved, ProblemSpec};
use radiomap_core::rbf::Geometry;
use radiomap_core::solver::SolverConfig;
use radiomap_core::sweep::{run_sweep, write_sweep_csv, SweepConfig};
use radiomap_core::tuning::{
    default_alpha_grid, grid_search, reconstruct, Algorithm, Candidate, CvConfig, DEFAULT_GRID_LIMIT,
};
use radiomap_core::{DenseTensor, Error, Result, SampleSet};

#[derive(Parser)]
#[command(name = "radiomap", version, about = "Radio map completion with rank and total-variation priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ground-truth map.
    Generate(GenerateArgs),
    /// Draw a random sampling mask from a tensor.
    Sample(SampleArgs),
    /// Reconstruct a full map from samples with fixed parameters.
    Complete(CompleteArgs),
    /// Choose parameters by holdout cross-validation.
    Tune(TuneArgs),
    /// Print the NMSE (dB) over the positions not in the sample set.
    Evaluate(EvaluateArgs),
    /// Run every (fraction, seed, method) cell and write a CSV.
    Sweep(SweepArgs),
    /// Convert a gridded CSV table into a tensor file.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Extents as `n1xn2x...xnN`.
    #[arg(long, value_parser = parse_dims)]
    dims: Dims,
    #[arg(long, default_value_t = 3)]
    rank: usize,
    /// Moving-average half-width in cells.
    #[arg(long, default_value_t = 0)]
    smoothness: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cell size per mode, written as the file's scale line.
    #[arg(long, value_delimiter = ',')]
    scale: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// DR relaxation in (0, 2].
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 500)]
    max_inner_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    inner_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    outer_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            step: self.step,
            max_inner_iters: self.max_inner_iters,
            inner_tol: self.inner_tol,
            outer_tol: self.outer_tol,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct GeometryArgs {
    /// Cell size per mode for RBF distances, e.g. `3,3,1`.
    #[arg(long, value_delimiter = ',')]
    scale: Option<Vec<f64>>,
}

impl GeometryArgs {
    fn geometry(&self, dims: &[usize]) -> Result<Geometry> {
        match &self.scale {
            Some(s) => Geometry::from_scale(dims, s),
            None => Ok(Geometry::unit(dims)),
        }
    }
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Algorithm,
    /// TV weights: one shared value or one per mode.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Turn off the row-scaling heuristic of `l2tv`.
    #[arg(long)]
    no_heuristic: bool,
    /// RBF shape parameter.
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-round solver diagnostics.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Algorithm,
    #[arg(long)]
    no_heuristic: bool,
    /// Candidate file; defaults to the built-in grid for the method.
    #[arg(long)]
    grid_spec: Option<PathBuf>,
    /// Search a per-mode α grid instead of one α shared by all modes.
    #[arg(long)]
    per_mode_alpha: bool,
    #[arg(long, default_value_t = DEFAULT_GRID_LIMIT)]
    grid_limit: usize,
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    #[arg(long)]
    out_params: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    samples: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "rank,l2tv,l1tv,rbf")]
    methods: Vec<Algorithm>,
    #[arg(long)]
    no_heuristic: bool,
    #[arg(long)]
    per_mode_alpha: bool,
    #[arg(long, default_value_t = DEFAULT_GRID_LIMIT)]
    grid_limit: usize,
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Axis columns in mode order.
    #[arg(long, value_delimiter = ',', default_value = "x,y,height")]
    axes: Vec<String>,
    #[arg(long, default_value = "value")]
    value: String,
    /// Index ranges to keep per mode, 1-based inclusive, e.g. `1:129,1:184,1:3`.
    #[arg(long, value_delimiter = ',', value_parser = parse_range)]
    crop: Option<Vec<std::ops::Range<usize>>>,
    /// Overrides the cell size derived from the axis spacing.
    #[arg(long, value_delimiter = ',')]
    scale: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the (cropped) grid back as CSV.
    #[arg(long)]
    export_csv: Option<PathBuf>,
}

/// Tensor extents from the `n1xn2x...xnN` flag grammar.
#[derive(Clone, Debug, PartialEq)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    s.split('x')
        .map(|p| match p.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("`{s}` is not of the form n1xn2x...xnN with positive extents")),
        })
        .collect::<std::result::Result<_, _>>()
        .map(Dims)
}

fn parse_method(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse::<Algorithm>().map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> std::result::Result<std::ops::Range<usize>, String> {
    let bad = || format!("`{s}` is not a range `first:last` with 1 <= first <= last");
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    if a < 1 || b < a {
        return Err(bad());
    }
    Ok(a - 1..b)
}

fn with_heuristic(method: Algorithm, no_heuristic: bool) -> Algorithm {
    match method {
        Algorithm::L2Tv { .. } => Algorithm::L2Tv { heuristic: !no_heuristic },
        other => other,
    }
}

fn expand_alphas(alpha: &[f64], order: usize) -> Result<Vec<f64>> {
    match alpha.len() {
        1 => Ok(vec![alpha[0]; order]),
        n if n == order => Ok(alpha.to_vec()),
        0 => Err(Error::InvalidArgument("--alpha is required for l2tv and l1tv".into())),
        n => Err(Error::InvalidArgument(format!(
            "--alpha takes one shared value or {order} per-mode values, got {n}"
        ))),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec::new(a.dims.0, a.rank, a.smoothness, a.noise_db, a.seed);
    let t = synthetic_map(&spec)?;
    write_tensor_with_scale(&t, a.scale.as_deref(), &a.out)
}

fn sample(a: SampleArgs) -> Result<()> {
    let t = read_tensor(&a.tensor)?;
    let mask = random_mask(t.dims(), a.fraction, a.seed)?;
    write_samples(&make_samples(&t, &mask)?, &a.out)
}

fn complete(a: CompleteArgs) -> Result<()> {
    let samples = read_samples(&a.samples)?;
    let order = samples.dims().len();
    let method = with_heuristic(a.method, a.no_heuristic);
    let geometry = a.geometry.geometry(samples.dims())?;
    let solver = a.solver.config();
    let candidate = match method {
        Algorithm::Rank => Candidate::Fixed,
        Algorithm::L2Tv { .. } | Algorithm::L1Tv => Candidate::Alphas(expand_alphas(&a.alpha, order)?),
        Algorithm::Rbf => Candidate::Epsilon(
            a.epsilon
                .ok_or_else(|| Error::InvalidArgument("--epsilon is required for rbf".into()))?,
        ),
    };
    let (estimate, report) = match (method, &candidate) {
        (Algorithm::Rank, _) => solve(ProblemSpec::rank(solver), &samples)?,
        (Algorithm::L2Tv { heuristic }, Candidate::Alphas(al)) => {
            solve(ProblemSpec::l2tv(al.clone(), heuristic, solver), &samples)?
        }
        (Algorithm::L1Tv, Candidate::Alphas(al)) => solve(ProblemSpec::l1tv(al.clone(), solver), &samples)?,
        _ => (reconstruct(method, &candidate, &samples, &geometry, &solver)?, String::new()),
    };
    if let Some(path) = &a.report {
        fs::write(path, format!("method: {method}\nparams: {candidate}\n{report}"))?;
    }
    write_tensor_with_scale(&estimate, a.geometry.scale.as_deref(), &a.out)
}

fn solve(spec: ProblemSpec, samples: &SampleSet) -> Result<(DenseTensor, String)> {
    let (estimate, report) = problems::complete(&spec, samples)?;
    Ok((estimate, report.to_string()))
}

fn cv_config(
    samples_dims: &[usize],
    geometry: &Geometry,
    per_mode: bool,
    limit: usize,
    holdout: f64,
    seed: u64,
    solver: SolverConfig,
) -> CvConfig {
    let mut cv = CvConfig::with_defaults(geometry, seed);
    cv.alpha_grid = default_alpha_grid(samples_dims.len(), !per_mode, limit);
    cv.holdout_fraction = holdout;
    cv.solver = solver;
    cv
}

fn tune(a: TuneArgs) -> Result<()> {
    let samples = read_samples(&a.samples)?;
    let method = with_heuristic(a.method, a.no_heuristic);
    let geometry = a.geometry.geometry(samples.dims())?;
    let order = samples.dims().len();
    let mut cv = cv_config(
        samples.dims(),
        &geometry,
        a.per_mode_alpha,
        a.grid_limit,
        a.holdout,
        a.seed,
        a.solver.config(),
    );
    if let Some(path) = &a.grid_spec {
        apply_grid_spec(&mut cv, method, order, &read_grid_spec(path)?)?;
    }
    let (best, table) = match grid_search(method, &samples, &geometry, &cv) {
        Ok(r) => r,
        Err(Error::TuningFailed { table }) => {
            for r in &table {
                eprintln!("{}: {}", r.candidate, r.outcome.as_ref().unwrap_err());
            }
            return Err(Error::TuningFailed { table });
        }
        Err(e) => return Err(e),
    };
    let mut out = String::new();
    writeln!(out, "method: {method}").unwrap();
    writeln!(out, "params: {best}").unwrap();
    writeln!(out, "holdout: {} seed: {}", format_value(cv.holdout_fraction), cv.seed).unwrap();
    writeln!(out, "candidate\tnmse_db").unwrap();
    for r in &table {
        match &r.outcome {
            Ok(v) => writeln!(out, "{}\t{}", r.candidate, format_value(*v)).unwrap(),
            Err(e) => writeln!(out, "{}\tfailed: {e}", r.candidate).unwrap(),
        }
    }
    fs::write(&a.out_params, out)?;
    println!("{best}");
    Ok(())
}

fn apply_grid_spec(cv: &mut CvConfig, method: Algorithm, order: usize, grid: &[Candidate]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid spec contains no candidates".into()));
    }
    let mismatch = |c: &Candidate| Error::InvalidArgument(format!("grid candidate `{c}` does not fit method {method}"));
    match method {
        Algorithm::Rank => {
            if let Some(c) = grid.iter().find(|c| **c != Candidate::Fixed) {
                return Err(mismatch(c));
            }
        }
        Algorithm::L2Tv { .. } | Algorithm::L1Tv => {
            cv.alpha_grid = grid
                .iter()
                .map(|c| match c {
                    Candidate::Alphas(a) => expand_alphas(a, order),
                    other => Err(mismatch(other)),
                })
                .collect::<Result<_>>()?;
        }
        Algorithm::Rbf => {
            cv.epsilon_grid = grid
                .iter()
                .map(|c| match c {
                    Candidate::Epsilon(e) => Ok(*e),
                    other => Err(mismatch(other)),
                })
                .collect::<Result<_>>()?;
        }
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let estimate = read_tensor(&a.estimate)?;
    let truth = read_tensor(&a.truth)?;
    let samples: SampleSet = read_samples(&a.samples)?;
    if estimate.dims() != truth.dims() {
        return Err(Error::InvalidArgument(format!(
            "estimate dims {:?} differ from truth dims {:?}",
            estimate.dims(),
            truth.dims()
        )));
    }
    println!("{}", format_value(nmse_unobserved(&estimate, &truth, &samples)?));
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let file = read_tensor_file(&a.truth)?;
    let geometry = file.geometry()?;
    let dims = file.tensor.dims().to_vec();
    let config = SweepConfig {
        fractions: a.fractions,
        seeds: a.seeds,
        algorithms: a.methods.into_iter().map(|m| with_heuristic(m, a.no_heuristic)).collect(),
        cv: cv_config(&dims, &geometry, a.per_mode_alpha, a.grid_limit, a.holdout, 0, a.solver.config()),
    };
    let rows = run_sweep(&file.tensor, &geometry, &config)?;
    write_sweep_csv(&rows, &a.out_csv)
}

/// Uniform spacing of an axis, 1 for a single coordinate.
fn axis_step(axis: &[f64]) -> Option<f64> {
    if axis.len() < 2 {
        return Some(1.0);
    }
    let step = axis[1] - axis[0];
    let uniform = axis
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1.0));
    uniform.then_some(step)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let columns = ColumnMap {
        axes: a.axes,
        value: a.value,
    };
    let mut data: GridData = ingest_grid_csv(&a.csv, &columns)?;
    if let Some(ranges) = &a.crop {
        data = data.crop(ranges)?;
    }
    let scale = match a.scale {
        Some(s) => s,
        None => data
            .geometry
            .axes()
            .iter()
            .zip(&columns.axes)
            .map(|(axis, name)| {
                axis_step(axis).ok_or_else(|| {
                    Error::InvalidArgument(format!("axis `{name}` is not uniformly spaced; pass --scale"))
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    write_tensor_with_scale(&data.tensor, Some(&scale), &a.out)?;
    if let Some(path) = &a.export_csv {
        export_grid_csv(&data, &columns, path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Sample(a) => sample(a),
        Command::Complete(a) => complete(a),
        Command::Tune(a) => tune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn parse_args() -> std::result::Result<Cli, ExitCode> {
    use clap::CommandFactory;
    Cli::try_parse().map_err(|e| {
        let text = e.render().to_string();
        let _ = e.print();
        if e.use_stderr() && !text.contains("Usage:") {
            eprintln!("\n{}", Cli::command().render_usage());
        }
        ExitCode::from(e.exit_code() as u8)
    })
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
