use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("no observations at or above threshold {threshold} in the {view} view; lower the threshold")]
    EmptySelection { threshold: f64, view: String },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("likelihood maximization did not converge after {iterations} iterations (best xi={best_xi}, sigma={best_sigma}, loglik={best_loglik})")]
    NoConvergence {
        iterations: usize,
        best_xi: f64,
        best_sigma: f64,
        best_loglik: f64,
        /// `(xi, profile log-likelihood)` for every outer evaluation.
        trace: Vec<(f64, f64)>,
    },

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e} after {intervals} intervals)")]
    Quadrature {
        requested: f64,
        achieved: f64,
        intervals: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag, used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidInput(_) => "invalid_input",
            Error::EmptyFile { .. } => "empty_file",
            Error::EmptySelection { .. } => "empty_selection",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Degenerate(_) => "degenerate",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Quadrature { .. } => "quadrature",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }
}
