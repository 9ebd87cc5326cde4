use isofuse::borrowing::BorrowingError;
use isofuse::joint::JointError;
use isofuse::likelihood::LikelihoodError;
use isofuse::simlab::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Range { line: u64, message: String },
    #[error("line {line}: empty group label")]
    EmptyGroup { line: u64 },
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown study '{0}'")]
    UnknownStudy(String),
    #[error("point is not testable for groups '{a}' and '{b}': {reason}")]
    PointNotTestable { a: String, b: String, reason: String },
    #[error("{0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::UnknownStudy(_) => 2,
            CliError::PointNotTestable { .. } => 4,
            _ => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownStudy(s) => CliError::UnknownStudy(s),
            SimError::InvalidConfig(s) => CliError::Config(s),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<JointError> for CliError {
    fn from(e: JointError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<LikelihoodError> for CliError {
    fn from(e: LikelihoodError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<BorrowingError> for CliError {
    fn from(e: BorrowingError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            other => CliError::Parse { line, message: format!("{other:?}") },
        }
    }
}
