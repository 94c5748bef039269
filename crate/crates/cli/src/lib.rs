//! Scenario runner and invariant verification for `ergodic-core`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod runner;
pub mod verify;

use thiserror::Error;

pub use config::Scenario;
pub use runner::{run_scenario, RunOptions, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ergodic_core::Error> for CliError {
    fn from(e: ergodic_core::Error) -> Self {
        CliError::Invariant(e.to_string())
    }
}
