use thiserror::Error;

use crate::spd::SpdMatrix;

/// Errors raised by the numerical layers (linear algebra, solvers, classifiers).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: entries ({row},{col}) and ({col},{row}) differ by {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("non-finite matrix entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not positive definite: eigenvalue {eigenvalue:e} is not above the floor {floor:e}")]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    #[error("scatter matrix is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("spectral function is not finite at eigenvalue {eigenvalue:e}")]
    Domain { eigenvalue: f64 },

    #[error("symmetric eigendecomposition did not converge (condition estimate {condition:e})")]
    EigenFailure { condition: f64 },

    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ambiguity ball has zero radius")]
    DegenerateBall,

    #[error("observation list is empty")]
    EmptyObservations,

    #[error("input is empty")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no sign change of the dual derivative found after {steps} doubling/halving steps")]
    BracketFailure { steps: usize },

    #[error("solver broke down at iteration {iteration}: {reason}")]
    Breakdown {
        iteration: usize,
        reason: String,
        /// Last iterate known to be inside the ball.
        last_feasible: Box<SpdMatrix>,
    },

    #[error("class {label:?} has {count} training samples, at least 2 are required")]
    UnderSampledClass { label: String, count: usize },

    #[error("at least two classes are required, found {found}")]
    TooFewClasses { found: usize },

    #[error("stratification failed: class {label:?} has {count} samples for {folds} folds")]
    Stratification {
        label: String,
        count: usize,
        folds: usize,
    },

    #[error("class {label:?}: {source}")]
    InClass {
        label: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
