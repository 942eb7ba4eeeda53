//! Crate-wide error type.

use thiserror::Error;

/// Errors raised while building structures, parsing expressions, or
/// evaluating geometry.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Ambient dimension is not a positive multiple of four.
    #[error("invalid ambient dimension: {0}")]
    InvalidDimension(String),

    /// Vector or matrix sizes do not match.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// Expression source failed to tokenize or parse.
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },

    /// Identifier not in the declared parameter list.
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        col: usize,
    },

    /// Function applied to the wrong number of arguments.
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    /// Evaluation left the mathematical domain of an operation.
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },

    /// Jacobian rank fell below the parameter count.
    #[error("immersion degenerate at {point}: {detail}")]
    Degenerate { point: String, detail: String },

    /// A caller-supplied quantity violated an operation contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Warped-product construction failed a structural invariant.
    #[error("warped chart invalid at {point}: {detail}")]
    WarpedStructure { point: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
