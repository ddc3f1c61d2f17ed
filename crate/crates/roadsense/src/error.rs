use std::path::{Path, PathBuf};

use roadsense_core::eval::EvalError;
use roadsense_core::signal::SignalError;
use roadsense_core::synth::SynthError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const ALIGNMENT: i32 = 4;
    pub const LABELS: i32 = 5;
    pub const DEGENERATE_FIT: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Alignment(String),
    #[error("label set references unknown sequence `{0}`")]
    UnknownSequence(String),
    #[error("labels: {0}")]
    Labels(EvalError),
    #[error("degenerate model fit: need at least two distinct distances")]
    DegenerateFit,
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Io { .. } | CliError::Format { .. } => exit::IO,
            CliError::Alignment(_) => exit::ALIGNMENT,
            CliError::UnknownSequence(_) | CliError::Labels(_) => exit::LABELS,
            CliError::DegenerateFit => exit::DEGENERATE_FIT,
            CliError::Other(_) => exit::OTHER,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn format(path: &Path, line: usize, message: impl ToString) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::LengthMismatch { expected, found } => CliError::Alignment(format!(
                "correspondence sets do not match the track: expected {expected}, found {found}"
            )),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::DegenerateFit => CliError::DegenerateFit,
            SynthError::Config(msg) => CliError::config("<synth>", msg),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingSequence(id) => CliError::UnknownSequence(id),
            EvalError::SingleClass | EvalError::TooFewEvents { .. } | EvalError::UndefinedResponse { .. } => {
                CliError::Labels(e)
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
