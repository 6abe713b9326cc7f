use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability mass sums to {total}, expected 1")]
    ProbabilityMass { total: String },

    #[error("negative {field}: {value}")]
    NegativeValue { field: &'static str, value: String },

    #[error("{side} value {value} has no probability mass")]
    OutOfSupport { side: &'static str, value: String },

    #[error("grid step must be positive and finite, got {0}")]
    DegenerateGrid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value ordering violated: {0}")]
    Ordering(String),

    #[error("distribution is not of the required family: {0}")]
    Family(String),

    #[error("rule or mechanism is not defined on the distribution's support")]
    SupportMismatch,

    #[error("exhaustive search over {cells} tradeable cells exceeds the limit of {limit}")]
    Scale { cells: usize, limit: usize },

    #[error("trade reduction needs at least two efficient trades, found {0}")]
    TooFewTrades(usize),

    #[error("unknown reproduction target `{0}`")]
    UnknownTarget(String),

    #[error("cannot parse `{0}` as a number")]
    Parse(String),

    #[error("payments are only solved for deterministic rules")]
    Randomized,

    #[error("malformed input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
