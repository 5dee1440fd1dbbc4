use std::io;

use thiserror::Error;

/// Errors surfaced by the engine. Variants are grouped so that front ends
/// can map them onto coarse exit categories (see [`ErrorKind`]).
#[derive(Debug, Error)]
pub enum ErgmError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("dyad ({0}, {1}) lies within one bipartite mode")]
    SameModeDyad(usize, usize),

    #[error("vertex {vertex} out of range for a network of {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("network has no edges")]
    EmptyNetwork,

    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("parse error at column {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("attribute error: {0}")]
    Attribute(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint violated by the initial network: {0}")]
    ConstraintViolation(String),

    #[error("no proposable dyad remains (frozen state)")]
    FrozenState,

    #[error("perfect separation detected: {0}")]
    Separation(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("observed statistics are not spanned by the sample: {0}")]
    NotSpanned(String),

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
    NonConvergence,
}

impl ErgmError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ErgmError::Separation(_)
            | ErgmError::Singular(_)
            | ErgmError::NotSpanned(_)
            | ErgmError::TooFewSamples { .. } => ErrorKind::Numerical,
            ErgmError::NonConvergence(_) => ErrorKind::NonConvergence,
            _ => ErrorKind::Data,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn tag(&self) -> &'static str {
        match self {
            ErgmError::InvalidNetwork(_) => "invalid_network",
            ErgmError::SelfLoop(_) => "self_loop",
            ErgmError::SameModeDyad(..) => "same_mode_dyad",
            ErgmError::VertexOutOfRange { .. } => "vertex_out_of_range",
            ErgmError::EmptyNetwork => "empty_network",
            ErgmError::Format { .. } => "format",
            ErgmError::Parse { .. } => "parse",
            ErgmError::Attribute(_) => "attribute",
            ErgmError::InvalidArgument(_) => "invalid_argument",
            ErgmError::ConstraintViolation(_) => "constraint_violation",
            ErgmError::FrozenState => "frozen_state",
            ErgmError::Separation(_) => "separation",
            ErgmError::Singular(_) => "singular",
            ErgmError::NotSpanned(_) => "not_spanned",
            ErgmError::TooFewSamples { .. } => "too_few_samples",
            ErgmError::NonConvergence(_) => "nonconvergence",
            ErgmError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, ErgmError>;
