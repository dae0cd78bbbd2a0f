//! Error types shared across the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set violates its declared invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// Geometric or numeric input outside the domain of a function
    /// (coincident points, negative angles, zero distances).
    #[error("domain error: {0}")]
    Domain(String),

    /// No satellite covers the terminal above the minimum elevation.
    #[error("coverage gap: no satellite visible from {0}")]
    CoverageGap(String),

    /// Non-finite values reached a policy scorer.
    #[error("non-finite policy input: {0}")]
    NonFinite(String),

    /// Training produced non-finite parameters.
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    /// A trace or registry did not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
