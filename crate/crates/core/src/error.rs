//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    #[error("invalid range: {0}")]
    InvalidRange(String),

    /// Times are not strictly decreasing.
    #[error("time grid must be strictly decreasing: {0}")]
    NotDecreasing(String),

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two point sets have different shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A noise level that must be positive is not.
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    /// Mixture has no components.
    #[error("mixture must have at least one component")]
    EmptyMixture,

    /// Mixture weights do not form a probability vector.
    #[error("mixture weights must be positive and sum to 1, got sum {0}")]
    WeightSum(f64),

    /// Negative entry in a probability vector.
    #[error("probability vector has a negative entry: {0}")]
    NegativeWeight(f64),

    /// Index outside the recorded trajectory data.
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    /// Trajectory was simulated without denoised-output recording.
    #[error("trajectory has no recorded denoised outputs")]
    MissingDenoised,

    /// Oracle does not expose convex-combination weights.
    #[error("oracle does not provide convex-combination weights")]
    WeightsUnavailable,

    /// Trajectory endpoints coincide; deviation profile undefined.
    #[error("degenerate endpoints: displacement norm {0} below threshold")]
    DegenerateEndpoints(f64),

    /// Least-squares window does not fit into the curve.
    #[error("window {window} too large for curve of {points} points")]
    WindowTooLarge { window: usize, points: usize },

    /// Step budget incompatible with the fine grid.
    #[error("infeasible budget: {steps} steps on a grid of {grid} nodes")]
    InfeasibleBudget { steps: usize, grid: usize },

    /// Invalid synthesis or experiment parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Underlying I/O failure, with file context.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad configuration or inputs (CLI exit code 2),
    /// false for numeric failures discovered during computation (exit code 3).
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::DegenerateEndpoints(_))
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
