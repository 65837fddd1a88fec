use thiserror::Error;

/// Errors produced by the model, decision, design and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid cell probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("invalid Dirichlet parameters: {0}")]
    InvalidParams(String),

    #[error("correlation {rho} is infeasible for margins ({theta1}, {theta2})")]
    InfeasibleCorrelation { theta1: f64, theta2: f64, rho: f64 },

    #[error("outcome {0} has a degenerate marginal probability")]
    DegenerateMargin(usize),

    #[error("outcome index {index} out of range for {outcomes} outcomes")]
    OutcomeOutOfRange { index: usize, outcomes: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("no posterior draws supplied")]
    EmptyDraws,

    #[error("anticipated effect is zero for the requested rule")]
    ZeroEffect,

    #[error("rule cannot reach the power target: {0}")]
    InfeasibleRule(String),

    #[error("weighted variance is not positive")]
    DegenerateVariance,

    #[error("no weight vector yields evidence above one half")]
    NoPositiveDirection,

    #[error("counts are empty")]
    EmptyCounts,

    #[error("counts sum to {found} but the design expects {expected}")]
    CountMismatch { expected: u64, found: u64 },

    #[error("response stream exhausted for arm {arm} after {available} subjects")]
    StreamExhausted { arm: char, available: u64 },

    #[error("invalid interim ratios: {0}")]
    InvalidRatios(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
