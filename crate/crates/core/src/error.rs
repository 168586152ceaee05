use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("integration blew up at t = {t}: {what}")]
    BlowUp { t: f64, what: String },
    #[error("data not identifiable: {0}")]
    Identifiability(String),
    #[error("non-physical fit: {0}")]
    NonPhysical(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification inconclusive (best bound {best_bound}): {reason}")]
    Inconclusive { best_bound: f64, reason: String },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of an iterative solver to reach its tolerance.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(self, Error::NotConverged(_) | Error::Inconclusive { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
