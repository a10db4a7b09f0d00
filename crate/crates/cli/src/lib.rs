//! Config-driven experiment runner on top of `rarefuse_core`.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

use std::path::Path;

pub use config::{ExperimentConfig, Mode, Split};
pub use error::CliError;
pub use runner::{execute, CampaignReport};

/// Runs `config` and writes its artifacts into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CampaignReport, CliError> {
    let report = execute(config)?;
    output::write_outputs(&report, &config.output_dir)?;
    Ok(report)
}

/// Loads a config file, runs it and writes the artifacts.
pub fn run_config_file(path: &Path) -> Result<CampaignReport, CliError> {
    run_experiment(&ExperimentConfig::from_path(path)?)
}
