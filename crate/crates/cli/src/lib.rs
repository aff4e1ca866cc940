//! Experiment driver for the CTAP atom-chip simulator.
//!
//! [`config`] parses the flat configuration format, [`run`] holds the
//! subcommand pipelines and [`manifest`] records what each run produced.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::RunManifest;
pub use run::{execute, Command, StageError};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "SIM_THREADS";

/// Thread count from the command line, else the environment, else `None`.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return positive(n).map(Some);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV}=`{s}` is not a thread count"))
            .and_then(positive)
            .map(Some),
    }
}

fn positive(n: usize) -> Result<usize, String> {
    if n == 0 {
        Err("thread count must be at least 1".into())
    } else {
        Ok(n)
    }
}
