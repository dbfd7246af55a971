//! Experiment lifecycle: configuration, the fixed-step simulation loop, log
//! output, and the operator console.

mod config;
mod console;
mod engine;
pub mod log;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    ExperimentConfig, NodeKind, NodeRole, NodeSpec, ValidatedConfig, REFERENCE_SCENARIO,
};
pub use console::{
    apply_command, parse_command_script, run_console_client, CommandSender, ConsoleCommand,
    ConsoleServer, ControlRequest, Reply, ScheduledCommand,
};
pub use engine::{
    reset_experiment, run_experiment, start_experiment, EndReason, Pacing, ResetMode,
    RunHandle, RunSummary, LOCK_FILE,
};
pub use log::LogRecord;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("output directory {0} is not writable: {1}")]
    OutputNotWritable(PathBuf, String),
    #[error("output directory {0} is not empty; reset it first")]
    OutputNotEmpty(PathBuf),
    #[error("invalid command: {0}")]
    CommandInvalid(String),
    #[error("experiment is not running")]
    NotRunning,
    #[error("an experiment is running in {0}")]
    RunInProgress(PathBuf),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
