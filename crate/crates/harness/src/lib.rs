//! Experiment harness: run configuration, the `obtrans` command set, and the
//! CSV/PPM artifacts every run directory contains.
//!
//! Commands are thin wrappers over the library crates. Every command creates
//! its run directory, writes the effective configuration back as
//! `config.snapshot`, and emits plain-text artifacts only: CSV for metrics,
//! PPM for images, the shared binary container for checkpoints and demos.

pub mod commands;
pub mod config;
pub mod csv;
pub mod pipeline;

pub use config::{load_config, parse_config, LearnerKind, RunConfig, TargetSel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration or arguments; maps to exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure during an otherwise valid run; maps to exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Wrap any library error as a runtime failure.
pub fn runtime(err: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(err.to_string())
}

/// Runtime failure with a note about which file or stage was involved.
pub fn runtime_at(what: &str, err: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(format!("{what}: {err}"))
}
