use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("barycenter segment not orthogonal to interior edge {edge}: defect {defect:.3e} (relative to h)")]
    HypothesisViolation { edge: usize, defect: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("Newton did not converge after {iterations} iterations (last residual {last_residual:.3e})")]
    NonConvergence { iterations: usize, last_residual: f64 },

    #[error("linear solve failed ({backend}): {detail}")]
    LinearSolveFailure { backend: &'static str, detail: String },

    #[error("phase field out of bounds at step {step}: element {element} has value {value:.12e}")]
    BoundViolation { step: usize, element: usize, value: f64 },

    #[error("mass drift at step {step}: |{mass:.15e} - {reference:.15e}| exceeds tolerance")]
    MassDrift { step: usize, mass: f64, reference: f64 },

    #[error("invariant violated at step {step}: {detail}")]
    InvariantViolation { step: usize, detail: String },

    #[error("solver failed at step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Strips `Step` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            e => e,
        }
    }
}
