use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (dimensions, ranges, labels).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix of dimension {dim} is not positive definite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPositiveDefinite {
        dim: usize,
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("eigensolver failed to converge on a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("geometric mean did not converge after {iterations} iterations (residual {residual:e}){}", class_suffix(.class))]
    MeanNonConvergence {
        iterations: usize,
        residual: f64,
        class: Option<u32>,
    },

    #[error("malformed input in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn class_suffix(class: &Option<u32>) -> String {
    match class {
        Some(c) => format!(" for class {c}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::EigenFailure { .. } | Error::MeanNonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
