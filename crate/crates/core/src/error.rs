use thiserror::Error;

use crate::security::lp::ConstraintFamily;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data that is inconsistent with the model (bad counts, bad indices).
    #[error("data error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { line: Option<usize>, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear program infeasible ({family} constraints)")]
    Infeasible { family: ConstraintFamily },

    #[error("linear program unbounded")]
    Unbounded,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data { line: None, msg: msg.into() }
    }

    pub(crate) fn data_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Data { line: Some(line), msg: msg.into() }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
