use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spline space: {0}")]
    InvalidSpace(String),

    #[error("derivative order {requested} exceeds spline degree {degree}")]
    DerivativeOrder { requested: usize, degree: usize },

    #[error("unsupported Gauss rule size {0} (supported: 1..=10)")]
    QuadratureSize(usize),

    #[error("bilaplacian form requires degree >= 2 in every direction (got {0})")]
    InsufficientContinuity(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(
        "Newton did not converge in {iterations} iterations (residual {residual:.3e}, target {target:.3e})"
    )]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("second-order step needs a previous state; take a first-order bootstrap step")]
    MissingHistory,

    #[error("energy increased by {increase:.3e} at step {step} (t = {time})")]
    EnergyIncrease { step: usize, time: f64, increase: f64 },

    #[error("mass drifted by {drift:.3e} (relative) at step {step}")]
    MassDrift { step: usize, drift: f64 },

    #[error("time stepping failed at t = {time} after {retries} step halvings: {source}")]
    StepFailure {
        time: f64,
        retries: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: {0}")]
    ConfigMissing(String),

    #[error("initial condition: {0}")]
    InitialCondition(String),

    #[error("unknown snapshot format '{0}'")]
    UnknownFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
