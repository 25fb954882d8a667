//! Experiment harness for AoS scheduling: JSON configuration, replicated
//! simulation with common random numbers, sweeps, CSV export and the
//! invariant suite behind `aos-sched verify`.

use std::fmt;

pub mod config;
pub mod experiment;
pub mod output;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig, PolicyKind};
pub use experiment::{run_config, run_experiment, sweep_lambda_total, ExperimentMetrics, SweepPoint};

/// Anything that can stop a command.
#[derive(Debug)]
pub enum Error {
    Config(ConfigError),
    Model(aos_sched_core::Error),
    Io(std::io::Error),
    Csv(csv::Error),
    Usage(String),
}

impl Error {
    /// Process exit code: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            Error::Model(_) | Error::Io(_) | Error::Csv(_) => 2,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(e) => write!(f, "config error: {e}"),
            Error::Model(e) => write!(f, "{e}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
            Error::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Error {}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Config(e)
    }
}

impl From<aos_sched_core::Error> for Error {
    fn from(e: aos_sched_core::Error) -> Self {
        Error::Model(e)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
