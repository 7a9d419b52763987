use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("cholesky factorization failed for equation {equation}")]
    Cholesky { equation: usize },

    #[error("eigenvalue solver did not converge")]
    EigenNonConvergence,

    #[error("no stable draw after {0} attempts")]
    StabilityNotReached(usize),

    #[error("all mixture components underflow")]
    Underflow,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("step `{step}` failed at iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error in {path:?} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptyInput(_) => "empty_input",
            Error::Singular(_) => "singular",
            Error::Cholesky { .. } => "cholesky",
            Error::EigenNonConvergence => "eigen_non_convergence",
            Error::StabilityNotReached(_) => "stability",
            Error::Underflow => "underflow",
            Error::Quadrature(_) => "quadrature",
            Error::Step { .. } => "step",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Container(_) => "container",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn at_step(self, iteration: usize, step: &'static str) -> Error {
        Error::Step {
            iteration,
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
