use thiserror::Error;

use crate::solver::TraceRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration value. `key` names the offending field.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("control error: {0}")]
    Control(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical divergence at iteration {k}: {message}")]
    Divergence {
        k: usize,
        message: String,
        trace: Box<Vec<TraceRecord>>,
    },

    #[error("oracle did not converge after {iterations} cycles (feasibility gap {gap:e})")]
    OracleNonConvergence { iterations: usize, gap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Shape {
            context,
            expected,
            found,
        }
    }

    /// Prefix the key of a configuration error, leaving other errors untouched.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Config { key, message } => Error::Config {
                key: if key.is_empty() {
                    prefix.to_string()
                } else {
                    format!("{prefix}.{key}")
                },
                message,
            },
            other => other,
        }
    }
}
