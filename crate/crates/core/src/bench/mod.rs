//! Experiment drivers and the `optilik` command line.

pub mod classification;
pub mod cli;
pub mod convergence;
pub mod dataset;
pub mod esterr;
pub mod output;

pub use classification::{run_classification_benchmark, BenchmarkResults, ExperimentConfig};
pub use convergence::{run_convergence_study, ConvergenceConfig, ConvergenceReport, ScatterMode};
pub use dataset::{bundled_haberman, load_csv, DataError, Dataset, LabelColumn};
pub use esterr::{run_estimation_error_study, EstimationErrorConfig, EstimationErrorRow};
pub use output::{Format, Metadata};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "OPTILIK_THREADS";

/// Runs `f` inside a pool sized by `OPTILIK_THREADS` (default: all cores).
pub fn with_worker_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build worker pool ({e}); using the global pool");
            f()
        }
    }
}
