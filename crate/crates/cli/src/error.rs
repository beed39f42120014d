use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(agepot::Error),
    #[error("{failed} of {total} checks failed")]
    Tolerance { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<agepot::Error> for CliError {
    fn from(e: agepot::Error) -> Self {
        use agepot::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            e @ (E::Dimension { .. } | E::OutsideDomain { .. } | E::Empty(_)) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Numerical(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Read { .. } | CliError::Parse { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Tolerance { .. } => 4,
            CliError::Write { .. } => 1,
        }
    }
}
