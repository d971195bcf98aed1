//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// One entry per offending config field, joined for display.
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("input lies outside the unit ball: norm = {norm}")]
    OutsideUnitBall { norm: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("model schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("classifier region does not match the configured region")]
    RegionMismatch,

    #[error("no usable entries in sample")]
    EmptySample,

    #[error("attack construction infeasible: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn schema(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
