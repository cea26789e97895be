use thiserror::Error;

use crate::model::{Action, StateVector};

/// Errors raised by the model, the state-space builder and the solvers.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state {state}: {reason}")]
    InvalidState { state: StateVector, reason: String },

    #[error("action {action} is not admissible in state {state}: {reason}")]
    InadmissibleAction {
        state: StateVector,
        action: Action,
        reason: String,
    },

    #[error("probability {value} outside [0, 1]")]
    ProbabilityDomain { value: f64 },

    /// Mass of a distribution-valued computation drifted beyond floating-point dust.
    #[error("normalization failure{context}: total mass {mass} (deviation {deviation:e})")]
    Normalization {
        mass: f64,
        deviation: f64,
        context: String,
    },

    #[error("state space would hold {count} states, budget is {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("population {n} is too large for the exact engine (max {max})")]
    PopulationTooLarge { n: u32, max: u32 },

    #[error("unknown state {0}")]
    UnknownState(StateVector),

    #[error("state index {index} out of range (space has {len} states)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no row for action {action} in state {state}")]
    MissingAction { state: StateVector, action: Action },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("round trip mismatch: {0}")]
    RoundTripMismatch(String),

    #[error("empty model: {0}")]
    EmptyModel(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Coarse classification used by the command-line driver for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ModelError::InvalidParameter { .. }
            | ModelError::InvalidPolicy(_)
            | ModelError::Config(_)
            | ModelError::Parse { .. } => ErrorKind::Config,
            ModelError::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Io,
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
