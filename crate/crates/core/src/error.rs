use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("memory allocation for vertex `{0}` is empty")]
    EmptyAllocation(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("stochastic consistency violated at {vertex}: marginal towards {succ} is {got}, expected {expected}")]
    StochasticConsistency {
        vertex: String,
        succ: String,
        got: f64,
        expected: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular stationary system (pivot {pivot:e}); the component is not irreducible")]
    Singular { pivot: f64 },

    #[error("window length must be at least 1")]
    ZeroWindow,

    #[error("start state {0} is not in the component")]
    StartNotInComponent(usize),

    #[error("invalid evaluation spec `{spec}`: {msg}")]
    EvalSpec { spec: String, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("division by zero on tape")]
    DivByZero,

    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("enumeration budget exceeded: {0} strategies > {1}")]
    Budget(u128, u128),

    #[error("timed out")]
    Timeout,

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
