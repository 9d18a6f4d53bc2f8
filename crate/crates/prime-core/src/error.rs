use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    ConfigInvalid(Vec<String>),

    #[error("no lane segment within {radius} m of ({x:.2}, {y:.2})")]
    NoRootSegment { x: f64, y: f64, radius: f64 },

    #[error("degenerate path: consecutive points coincide at index {0}")]
    DegeneratePath(usize),

    #[error("state lies {distance:.2} m from reference path, outside the corridor ({limit:.2} m)")]
    OutOfCorridor { distance: f64, limit: f64 },

    #[error("singular projection: 1 - kappa*d = {0:.4} <= 0")]
    SingularProjection(f64),

    #[error("no feasible trajectory on any candidate path")]
    EmptyFeasibleSet,

    #[error("need at least 2 observed samples, track has {0}")]
    InsufficientObservations(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite (last finite loss {last_finite})")]
    Diverged { epoch: usize, last_finite: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
