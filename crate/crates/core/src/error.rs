use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmmgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("degenerate direction: projection onto the complement of L has norm {norm:.3e}")]
    DegenerateDirection { norm: f64 },

    #[error("peak selection failed: {0}")]
    PeakSelection(String),

    #[error("peak selection hit the lower bound t = {t:.3e}; the iterate collapsed onto L")]
    BoundaryDegeneracy { t: f64 },

    #[error("step size search failed: descent condition not met up to m = {m}")]
    StepFailure { m: i32 },

    #[error("inner minimax loop on generation {generation} exceeded {steps} steps")]
    InnerLoopCap { generation: usize, steps: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for LmmgError {
    fn from(err: std::io::Error) -> Self {
        LmmgError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LmmgError>;
