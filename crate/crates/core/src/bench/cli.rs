//! The `optilik` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::classification::{run_classification_benchmark, ExperimentConfig};
use super::convergence::{run_convergence_study, ConvergenceConfig, ScatterMode};
use super::dataset::{bundled_haberman, load_csv, DataError, LabelColumn};
use super::esterr::{run_estimation_error_study, EstimationErrorConfig};
use super::output::{write_csv, write_json, Format, Metadata};
use crate::classify::Method;
use crate::fr_solver::{solve, FrProblem, FrSolverOptions, Termination};
use crate::kl_solver::{optimistic_loglik_kl, solve_kl, KlProblem};
use crate::mean_solver::{optimistic_loglik_mean, solve_mean, MeanProblem, MeanRadius};
use crate::spd::SpdMatrix;
use crate::FrBall;

#[derive(Debug, Parser)]
#[command(
    name = "optilik",
    version,
    about = "Optimistic Gaussian likelihoods and discriminant benchmarks"
)]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with settings for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Number of repetitions.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem given as JSON.
    Optimistic {
        /// Problem file (`mean`, `cov`, `rho`, `divergence`, `observations`).
        problem: PathBuf,
    },
    /// Convergence study of the Fisher-Rao solver.
    Converge {
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, value_enum)]
        mode: Option<ScatterMode>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Directory for per-run trace files; defaults to `<out>_traces`.
        #[arg(long, value_name = "DIR")]
        trace_dir: Option<PathBuf>,
    },
    /// Classification benchmark with cross-validated radii.
    Bench {
        /// CSV dataset, optionally followed by `:LABEL` (column name, index or `last`).
        #[arg(long = "data", value_name = "PATH[:LABEL]")]
        data: Vec<String>,
        /// Treat the first row of every dataset as data.
        #[arg(long)]
        no_header: bool,
        /// Skip the bundled Haberman dataset.
        #[arg(long)]
        no_bundled: bool,
        /// Comma-separated subset of QDA, RQDA, FQDA, KQDA.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Estimation error of sample means and covariances.
    Esterr {
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> Failure {
    Failure::Solver(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match super::with_worker_pool(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("optilik: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Optimistic { problem } => optimistic(cli, problem),
        Command::Converge {
            dims,
            mode,
            max_iterations,
            trace_dir,
        } => converge(cli, dims, *mode, *max_iterations, trace_dir.as_deref()),
        Command::Bench {
            data,
            no_header,
            no_bundled,
            methods,
        } => bench(cli, data, *no_header, *no_bundled, methods),
        Command::Esterr { dim, sizes } => esterr(cli, *dim, sizes),
    }
}

fn read_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C, Failure> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::Data(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(path: Option<&Path>) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| {
        let target = path.map_or("standard output".to_string(), |p| p.display().to_string());
        Failure::Data(format!("cannot write {target}: {e}"))
    }
}

/// Writes `rows` to `path` (or stdout) in the requested format.
fn emit<T: Serialize>(
    cli: &Cli,
    path: Option<&Path>,
    meta: &Metadata,
    key: &str,
    rows: &[T],
) -> Result<(), Failure> {
    let mut out = open_out(path)?;
    match cli.format.unwrap_or_default() {
        Format::Csv => write_csv(&mut out, meta, rows),
        Format::Json => write_json(&mut out, meta, &[(key, &rows)]),
    }
    .and_then(|()| out.flush())
    .map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DivergenceTag {
    Fr,
    Kl,
    FrMean,
    KlMean,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemInput {
    mean: Vec<f64>,
    /// Row-major.
    cov: Vec<Vec<f64>>,
    rho: f64,
    divergence: DivergenceTag,
    observations: Vec<Vec<f64>>,
    #[serde(default)]
    solver: FrSolverOptions,
}

#[derive(Debug, Serialize)]
struct OptimisticOutput {
    divergence: String,
    rho: f64,
    value: f64,
    gamma_star: Option<f64>,
    iterations: Option<usize>,
    termination: Option<Termination>,
    /// Row-major optimal covariance for the covariance balls.
    covariance: Option<Vec<Vec<f64>>>,
    /// Optimal mean for the mean balls.
    mean: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct OptimisticCsvRow<'a> {
    divergence: &'a str,
    rho: f64,
    value: f64,
    gamma_star: Option<f64>,
    iterations: Option<usize>,
    termination: Option<Termination>,
    /// Space-separated, row-major.
    optimizer: String,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn solve_problem(input: &ProblemInput) -> Result<OptimisticOutput, Failure> {
    let n = input.mean.len();
    if input.cov.len() != n || input.cov.iter().any(|r| r.len() != n) {
        return Err(Failure::Data(format!("cov must be {n}×{n} to match mean")));
    }
    let flat: Vec<f64> = input.cov.iter().flatten().copied().collect();
    let cov = SpdMatrix::new(DMatrix::from_row_slice(n, n, &flat))
        .map_err(|e| Failure::Data(format!("cov: {e}")))?;
    let mean = DVector::from_column_slice(&input.mean);
    let observations: Vec<DVector<f64>> = input
        .observations
        .iter()
        .map(|x| DVector::from_column_slice(x))
        .collect();
    if let Some(x) = observations.iter().find(|x| x.len() != n) {
        return Err(Failure::Data(format!(
            "observation of length {} does not match dimension {n}",
            x.len()
        )));
    }
    let rho = input.rho;
    let mut out = OptimisticOutput {
        divergence: String::new(),
        rho,
        value: f64::NAN,
        gamma_star: None,
        iterations: None,
        termination: None,
        covariance: None,
        mean: None,
    };
    match input.divergence {
        DivergenceTag::Fr => {
            out.divergence = "fr".into();
            let ball = FrBall::new(cov, rho).map_err(data_err)?;
            let scatter = crate::SymMatrix::scatter(&observations, &mean).map_err(data_err)?;
            let problem = FrProblem::new(ball, scatter).map_err(data_err)?;
            let report = solve(&problem, &input.solver).map_err(solver_err)?;
            out.value = -report.best_objective;
            out.iterations = Some(report.iterations_used);
            out.termination = Some(report.termination);
            out.covariance = Some(rows_of(report.best_iterate.as_matrix()));
        }
        DivergenceTag::Kl => {
            out.divergence = "kl".into();
            if rho == 0.0 {
                let (value, sigma) =
                    optimistic_loglik_kl(&observations, &mean, &cov, rho).map_err(data_err)?;
                out.value = value;
                out.covariance = Some(rows_of(sigma.as_matrix()));
            } else {
                let problem = KlProblem::from_observations(&observations, &mean, cov, rho)
                    .map_err(data_err)?;
                let sol = solve_kl(&problem).map_err(solver_err)?;
                out.value = -sol.optimal_value;
                out.gamma_star = Some(sol.gamma_star);
                out.iterations = Some(sol.newton_iterations);
                out.covariance = Some(rows_of(sol.optimizer.as_matrix()));
            }
        }
        DivergenceTag::FrMean | DivergenceTag::KlMean => {
            let radius = if matches!(input.divergence, DivergenceTag::FrMean) {
                out.divergence = "fr-mean".into();
                MeanRadius::Fr(rho)
            } else {
                out.divergence = "kl-mean".into();
                MeanRadius::Kl(rho)
            };
            if rho == 0.0 {
                let (value, mu) =
                    optimistic_loglik_mean(&observations, &mean, &cov, radius).map_err(data_err)?;
                out.value = value;
                out.mean = Some(mu.iter().copied().collect());
            } else {
                let problem =
                    MeanProblem::new(&observations, mean, cov, radius).map_err(data_err)?;
                let sol = solve_mean(&problem).map_err(solver_err)?;
                out.value = -sol.optimal_value;
                out.gamma_star = Some(sol.gamma_star);
                out.mean = Some(sol.mu_star.iter().copied().collect());
            }
        }
    }
    Ok(out)
}

fn optimistic(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let input: ProblemInput = serde_json::from_str(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let result = solve_problem(&input)?;
    let meta = Metadata::new(cli.seed.unwrap_or(0), &text);
    let out_path = cli.out.as_deref();
    match cli.format.unwrap_or_default() {
        Format::Json => {
            let mut out = open_out(out_path)?;
            write_json(&mut out, &meta, &[("result", &result)])
                .and_then(|()| out.flush())
                .map_err(io_err(out_path))
        }
        Format::Csv => {
            let optimizer = result
                .covariance
                .iter()
                .flatten()
                .flatten()
                .chain(result.mean.iter().flatten())
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(" ");
            let row = OptimisticCsvRow {
                divergence: &result.divergence,
                rho: result.rho,
                value: result.value,
                gamma_star: result.gamma_star,
                iterations: result.iterations,
                termination: result.termination,
                optimizer,
            };
            emit(cli, out_path, &meta, "result", &[row])
        }
    }
}

fn converge(
    cli: &Cli,
    dims: &[usize],
    mode: Option<ScatterMode>,
    max_iterations: Option<usize>,
    trace_dir: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg: ConvergenceConfig = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if !dims.is_empty() {
        cfg.dims = dims.to_vec();
    }
    if let Some(m) = mode {
        cfg.modes = vec![m];
    }
    if let Some(k) = max_iterations {
        cfg.max_iterations = k;
    }
    cfg.validate().map_err(usage_err)?;
    let report = run_convergence_study(&cfg).map_err(solver_err)?;
    let meta = Metadata::new(cfg.seed, &cfg);

    let trace_dir = trace_dir.map(Path::to_path_buf).or_else(|| {
        cli.out.as_ref().map(|o| {
            let stem = o
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            o.with_file_name(format!("{stem}_traces"))
        })
    });
    if let Some(dir) = &trace_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
        for trace in &report.traces {
            let path = dir.join(trace.file_name());
            let file = File::create(&path)
                .map_err(|e| Failure::Data(format!("cannot create {}: {e}", path.display())))?;
            write_csv(BufWriter::new(file), &meta, &trace.points()).map_err(io_err(Some(&path)))?;
        }
    }
    emit(cli, cli.out.as_deref(), &meta, "rows", &report.rows)
}

fn parse_data_arg(arg: &str) -> (PathBuf, LabelColumn) {
    match arg.rsplit_once(':') {
        Some((path, label)) if !path.is_empty() && !label.is_empty() => {
            (PathBuf::from(path), label.parse().expect("infallible"))
        }
        _ => (PathBuf::from(arg), LabelColumn::Last),
    }
}

fn bench(
    cli: &Cli,
    data: &[String],
    no_header: bool,
    no_bundled: bool,
    methods: &[Method],
) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if !methods.is_empty() {
        cfg.methods = methods.to_vec();
    }
    cfg.validate().map_err(usage_err)?;

    let mut datasets = vec![];
    if !no_bundled {
        datasets.push(bundled_haberman());
    }
    for arg in data {
        let (path, label) = parse_data_arg(arg);
        datasets.push(load_csv(&path, &label, !no_header)?);
    }
    if datasets.is_empty() {
        return Err(Failure::Usage("no datasets selected".into()));
    }
    for d in &datasets {
        log::info!(
            "{}: {} samples, {} features, sha256 {}",
            d.name,
            d.len(),
            d.dim(),
            d.provenance.sha256
        );
    }
    let results = run_classification_benchmark(&cfg, &datasets).map_err(solver_err)?;
    for s in &results.summary {
        log::info!(
            "{} {}: {:.2} ± {:.2}",
            s.dataset,
            s.method,
            s.mean_ccr,
            s.std_ccr
        );
    }
    let meta = Metadata::new(cfg.seed, &cfg);
    let out_path = cli.out.clone().or_else(|| cfg.output.clone());
    let out_path = out_path.as_deref();
    match cli.format.unwrap_or_default() {
        Format::Json => {
            let mut out = open_out(out_path)?;
            write_json(
                &mut out,
                &meta,
                &[
                    (
                        "trials",
                        &serde_json::to_value(&results.trials).map_err(data_err)?,
                    ),
                    (
                        "summary",
                        &serde_json::to_value(&results.summary).map_err(data_err)?,
                    ),
                    (
                        "skipped",
                        &serde_json::to_value(&results.skipped).map_err(data_err)?,
                    ),
                ],
            )
            .and_then(|()| out.flush())
            .map_err(io_err(out_path))
        }
        Format::Csv => {
            emit(cli, out_path, &meta, "trials", &results.trials)?;
            let summary_path = out_path.map(|o| {
                let stem = o
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                o.with_file_name(format!("{stem}_summary.csv"))
            });
            if summary_path.is_none() {
                println!();
            }
            emit(
                cli,
                summary_path.as_deref(),
                &meta,
                "summary",
                &results.summary,
            )
        }
    }
}

fn esterr(cli: &Cli, dim: Option<usize>, sizes: &[usize]) -> Result<(), Failure> {
    let mut cfg: EstimationErrorConfig = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(d) = dim {
        cfg.dim = d;
    }
    if !sizes.is_empty() {
        cfg.sample_sizes = sizes.to_vec();
    }
    cfg.validate().map_err(usage_err)?;
    let rows = run_estimation_error_study(&cfg).map_err(solver_err)?;
    emit(
        cli,
        cli.out.as_deref(),
        &Metadata::new(cfg.seed, &cfg),
        "rows",
        &rows,
    )
}
