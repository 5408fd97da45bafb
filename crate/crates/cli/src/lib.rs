//! Experiment driver for the `dweuler` solver: configuration, resolution
//! ladders, artifact output and the analysis pipeline.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_analyze, cmd_consistency, cmd_convergence, cmd_run};
pub use config::{ExperimentConfig, Problem};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical failure at n = {level}: {message}; last state written to {}", dump.display())]
    Numerical {
        level: u32,
        message: String,
        dump: PathBuf,
    },
    #[error(transparent)]
    Core(#[from] dweuler::Error),
}

impl CliError {
    /// 2 for usage, configuration and I/O problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        use dweuler::Error as E;
        match self {
            CliError::Numerical { .. } => 3,
            CliError::Core(E::Domain(_) | E::InvalidState(_) | E::StepRejected(_) | E::RunFailed { .. }) => 3,
            _ => 2,
        }
    }
}
