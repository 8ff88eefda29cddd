use std::fmt;

/// Command failures, classified by exit code: input and format problems
/// exit with 2, numerical failures with 3, and a simulation run where too
/// many replicates failed exits with 4.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(niece_core::Error),
    Replicates { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Replicates { .. } => 4,
        }
    }

    /// Wraps a filesystem or format error with the path it came from.
    pub fn input<E: fmt::Display>(context: &str, err: E) -> Self {
        CliError::Input(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::Numeric(err) => write!(f, "{err}"),
            CliError::Replicates { failed, total } => write!(
                f,
                "{failed} of {total} replicates failed; inspect the per-replicate output"
            ),
        }
    }
}

impl std::error::Error for CliError {}

impl From<niece_core::Error> for CliError {
    fn from(err: niece_core::Error) -> Self {
        CliError::Numeric(err)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
