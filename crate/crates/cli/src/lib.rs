//! Experiment harness: configuration, presets, Monte-Carlo runs and CSV
//! output for the `cffl` binary.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use cffl_core::baselines::SchemeId;
pub use config::{ExperimentConfig, Overrides, Sweep, SweepVar};
pub use run::{execute, run, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cffl_core::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
