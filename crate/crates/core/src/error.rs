use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    Domain { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular matrix: |det| = {det:e}, pivot ratio {condition:e}")]
    Singular { det: f64, condition: f64 },

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported wind: g0(W,W) = {norm_sq} > 1 at {point:?}")]
    UnsupportedWind { point: Vec<f64>, norm_sq: f64 },

    #[error("inadmissible velocity at sample {index}")]
    Inadmissible { index: usize },

    #[error("non-unit parametrization at sample {index}: F = {value}")]
    Parametrization { index: usize, value: f64 },

    #[error("manifold assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("accuracy monitor breached: {0}")]
    Accuracy(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("distribution is not nowhere-integrable: {0}")]
    Nonintegrable(String),

    #[error("inadmissible control: {0}")]
    InadmissibleControl(String),
}
