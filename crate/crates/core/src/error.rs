use thiserror::Error;

/// Errors raised by the modelling, solver and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in mode {mode}: {field} is {got}, expected {expected}")]
    Dimension {
        mode: usize,
        field: &'static str,
        got: String,
        expected: String,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no unique stationary distribution: {0}")]
    NoStationaryDistribution(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("inconsistent equality constraint `{label}` (residual {residual:e})")]
    InconsistentEquality { label: String, residual: f64 },

    #[error("malformed program: {0}")]
    MalformedProgram(String),

    #[error("solver numerical failure: {0}")]
    NumericalFailure(String),

    #[error("marginally stable second-moment operator (spectral abscissa {0:e})")]
    Marginal(f64),

    #[error("gain recovery failed in mode {mode}: {reason}")]
    GainRecovery { mode: usize, reason: String },

    #[error("closed-loop re-verification failed: {0}")]
    Verification(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("unknown scenario id {0}")]
    UnknownScenario(u32),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
