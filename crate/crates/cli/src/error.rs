use std::io;
use std::path::PathBuf;

use aucrac_core::sim::SimError;
use aucrac_core::ConfigError;
use thiserror::Error;

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG_MISSING: i32 = 10;
    pub const CONFIG_SCHEMA: i32 = 11;
    pub const UNKNOWN_VARIANT: i32 = 12;
    pub const MIX_SUM: i32 = 13;
    pub const CONFIG_INVALID: i32 = 14;
    pub const SPEC_INVALID: i32 = 15;
    pub const OUTPUT_IO: i32 = 20;
    pub const RESULTS_INPUT: i32 = 21;
    pub const RUNTIME: i32 = 30;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file {path} not found")]
    ConfigNotFound { path: PathBuf },
    #[error("cannot read config file {path}: {source}")]
    ConfigRead { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("results file {path} has no data rows")]
    EmptyResults { path: PathBuf },
    #[error("results file {path} is missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("cannot read results file {path}: {message}")]
    ResultsRead { path: PathBuf, message: String },
    #[error("simulation failed ({context}): {source}")]
    Runtime { context: String, source: SimError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigNotFound { .. } | Self::ConfigRead { .. } => exit::CONFIG_MISSING,
            Self::Config(e) => match e {
                ConfigError::Schema { .. } => exit::CONFIG_SCHEMA,
                ConfigError::UnknownVariant { .. } => exit::UNKNOWN_VARIANT,
                ConfigError::MixSum { .. } => exit::MIX_SUM,
                ConfigError::Invalid { .. } => exit::CONFIG_INVALID,
            },
            Self::Spec(_) => exit::SPEC_INVALID,
            Self::Output { .. } => exit::OUTPUT_IO,
            Self::EmptyResults { .. } | Self::MissingColumn { .. } | Self::ResultsRead { .. } => exit::RESULTS_INPUT,
            Self::Runtime { .. } => exit::RUNTIME,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, err: impl ToString) -> Self {
        Self::Output {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
