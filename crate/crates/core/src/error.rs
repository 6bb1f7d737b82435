use thiserror::Error;

use crate::state::BackendTag;

/// Errors raised across serialization, sampling, modelling and density recovery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("backend mismatch: expected {expected:?}, found {found:?}")]
    BackendMismatch { expected: BackendTag, found: BackendTag },

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("no weight for symbol `{symbol}` in the current state")]
    MissingWeight { symbol: String },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("malformed serialization at position {position}: {reason}")]
    MalformedSerialization { position: usize, reason: String },

    #[error("enumeration too large: {count} serializations (bound {bound})")]
    EnumerationTooLarge { count: u128, bound: usize },

    #[error("dense materialization needs {required} cells (budget {budget})")]
    BudgetExceeded { required: u128, budget: usize },

    #[error("dead end at position {position}: prefix extends to no serialization")]
    DeadEnd { position: usize },

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("serialization does not de-serialize to the given instance")]
    NotASerializationOf,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("non-finite activation at step {step}")]
    NonFiniteActivation { step: usize },

    #[error("training diverged; last finite step {last_finite_step}")]
    Diverged { last_finite_step: u64 },

    #[error("model has no discriminative head")]
    MissingHead,

    #[error("property is not realizable by any serialization of the instance")]
    UnrealizableProperty,

    #[error("division undefined: P(o|x) = 0")]
    DivisionUndefined,

    #[error("trajectory became non-finite at step {step}")]
    NonFiniteTrajectory { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
