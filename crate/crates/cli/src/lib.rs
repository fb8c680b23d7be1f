//! Command-line front end: reads a JSON run configuration, runs one
//! experiment and writes `report.json`, `timings.json` and CSV tables.

mod commands;
pub mod config;
pub mod output;

use std::path::Path;

pub use commands::run;
pub use config::{parse_config, Kind, RunConfig};

/// Environment variable capping the number of sweep workers.
pub const WORKERS_ENV: &str = "VECTORHOST_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Model(#[from] vectorhost::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{failed} of {count} sweep scenarios failed to run (see report.json)")]
    Scenarios { failed: usize, count: usize },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}

/// Outcome of a run that completed its computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// The computation ran but a checked property failed.
    CheckFailed,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::CheckFailed => "check_failed",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::CheckFailed => 2,
        }
    }

    fn and(self, ok: bool) -> Self {
        if ok {
            self
        } else {
            Verdict::CheckFailed
        }
    }
}

/// Reads `config_path`, applies the seed override and runs the experiment
/// named by `command`, which must match the configured kind.
pub fn run_file(
    command: Kind,
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<Verdict, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::io(format!("cannot read {}", config_path.display()), e))?;
    let mut config = parse_config(&text)?;
    if config.kind != command {
        return Err(CliError::Config {
            path: "experiment.kind".into(),
            message: format!(
                "config is for \"{}\" but the command is \"{}\"",
                config.kind.name(),
                command.name()
            ),
        });
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    run(&config, out)
}
