use spar_core::SparError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data could not be used; `lines` lists offending line numbers.
    #[error("{path}: {message}{}", format_lines(.lines))]
    Ingest { path: PathBuf, message: String, lines: Vec<u64> },

    #[error(transparent)]
    Model(#[from] SparError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn format_lines(lines: &[u64]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let shown: Vec<String> = lines.iter().take(20).map(u64::to_string).collect();
    let more = if lines.len() > 20 { format!(" and {} more", lines.len() - 20) } else { String::new() };
    format!(" (lines {}{more})", shown.join(", "))
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for configuration and validation problems, 3 for numerical
    /// failures, 4 for file system errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Ingest { .. } => 2,
            CliError::Model(e) => match e {
                SparError::Config(_) | SparError::Domain(_) | SparError::OutsideRegion { .. } => 2,
                SparError::Numerical(_) | SparError::Fitting { .. } => 3,
                SparError::Io(_) => 4,
            },
            CliError::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
