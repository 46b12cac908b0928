//! `credcli`: scripting client and node runner for the credential ledger.
//!
//! Every command prints exactly one JSON document on stdout. Failures print
//! `{"error":{"code","message"}}` and exit nonzero.

pub mod args;
pub mod client;
pub mod commands;
pub mod keyfile;

use credledger::EngineError;
use serde_json::{json, Value};

pub use args::Cli;
pub use commands::run;
pub use keyfile::KeyFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{message}")]
    Api { status: u16, code: String, message: String },
    #[error("cannot reach gateway: {0}")]
    Transport(String),
    #[error("bad key file: {0}")]
    Key(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CliError {
    pub fn code(&self) -> String {
        match self {
            CliError::Api { code, .. } => code.clone(),
            CliError::Transport(_) => "TRANSPORT".into(),
            CliError::Key(_) => "INVALID_KEY".into(),
            CliError::Io(_) => "IO_ERROR".into(),
            CliError::Usage(_) => "USAGE".into(),
            CliError::Unsupported(_) => "UNSUPPORTED".into(),
            CliError::Engine(e) => e.code().to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"code": self.code(), "message": self.to_string()}})
    }
}
