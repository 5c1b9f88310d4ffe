use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid argument, map, topology or scenario field.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// A scenario document that could not be parsed.
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    /// Conservation arithmetic produced a value it never should.
    #[error("numerical fault at step {step}, node {node}: {detail}")]
    NumericalFault { step: u64, node: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad input rather than by the simulation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Validation { .. } | Error::Syntax { .. })
    }
}
