use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle corpus violation: {0}")]
    Corpus(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 2 config, 3 solver, 4 corpus, 1 i/o.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Corpus(_) => 4,
        }
    }
}

impl From<sdsearch::Error> for CliError {
    fn from(e: sdsearch::Error) -> Self {
        use sdsearch::Error as E;
        match e {
            E::NoBracket { .. } | E::NoConvergence(_) | E::OrderingViolation(..) => CliError::Solver(e.to_string()),
            E::Io(m) => CliError::Io(m),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
