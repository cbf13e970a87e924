//! Library error type.

use thiserror::Error;

/// Errors produced by graph construction, cost construction, solver
/// parameter validation, and experiment-config validation.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    /// A random-geometric draw never produced a connected graph.
    #[error(
        "infeasible graph spec (n = {n}, radius = {radius}): \
         no connected draw within {attempts} attempts"
    )]
    InfeasibleGraph { n: usize, radius: f64, attempts: usize },

    /// A linear system that should be solvable was not (numerically singular).
    #[error("linear system not solvable: {context}")]
    Singular { context: String },

    /// Mismatched vector/matrix/graph dimensions.
    #[error("dimension mismatch: {context}")]
    DimMismatch { context: String },

    /// A NaN or infinity reached an interface that requires finite input.
    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    /// An experiment configuration failed validation; `key` names the
    /// offending configuration key.
    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A serialized graph edge list could not be parsed.
    #[error("graph parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name: name.into(), reason: reason.into() }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }

    pub fn dim(context: impl Into<String>) -> Self {
        Error::DimMismatch { context: context.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
