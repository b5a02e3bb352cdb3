use std::path::PathBuf;

use thiserror::Error;
use varmdp::VarMdpError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Model(#[from] VarMdpError),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    /// A run completed but did not meet its success condition.
    #[error("{0}")]
    Failed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 manifest, 3 instance validation, 4 chain structure, 5 cap, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Manifest(_) => 2,
            CliError::Model(e) => match e {
                VarMdpError::Invalid(_)
                | VarMdpError::Malformed(_)
                | VarMdpError::Parse { .. }
                | VarMdpError::SchemaVersion { .. }
                | VarMdpError::InfeasibleState { .. }
                | VarMdpError::MissingResolution => 3,
                VarMdpError::Multichain { .. } | VarMdpError::Periodic { .. } => 4,
                VarMdpError::CapExceeded { .. } | VarMdpError::IterationCapExceeded { .. } => 5,
                _ => 1,
            },
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
