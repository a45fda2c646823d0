use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] degenlab::Error),
    #[error("{0} probe(s) failed")]
    ProbesFailed(usize),
}

impl CliError {
    /// 2 for rejected input, 3 for solver failures, 1 for failed probes.
    pub fn exit_code(&self) -> i32 {
        use degenlab::Error as E;
        match self {
            CliError::Config(_) | CliError::Csv { .. } => 2,
            CliError::Io { .. } => 2,
            CliError::ProbesFailed(_) => 1,
            CliError::Core(e) => match e {
                E::Quadrature(_)
                | E::LinearSolver { .. }
                | E::Modes(_)
                | E::NoConvergence(_)
                | E::Overflow(_)
                | E::GammaPole(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
