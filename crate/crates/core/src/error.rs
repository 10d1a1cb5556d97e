use thiserror::Error;

/// Errors raised by the solvers, simulators and estimators in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("operation requires Y to be independent of X")]
    UnsupportedDependence,

    /// The defining equation has no root inside the admissible range.
    #[error("no bracket for {what}: {detail}")]
    NoBracket { what: &'static str, detail: String },

    #[error("root finder did not converge for {0}")]
    NoConvergence(&'static str),

    #[error("partial-valuation distributions at positions {0} and {1} are not stochastically ordered")]
    OrderingViolation(usize, usize),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
