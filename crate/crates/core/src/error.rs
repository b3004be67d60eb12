use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite integrand value {value} at quadrature node {node}")]
    Quadrature { node: f64, value: f64 },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("readout violates the bounded-readout assumption; construct with `allow_unbounded_readout` to proceed")]
    AssumptionViolation,

    #[error("degenerate importance target: every log-weight is -inf")]
    DegenerateTarget,

    #[error("chain failed to mix: acceptance rate {acceptance:.3} after adaptation")]
    MixingFailure { acceptance: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
