//! Reproducible scenario runner: TOML configuration in, CSV files and a JSON
//! report out.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use config::{validate_config, Scenario, ScenarioConfig, ScenarioParams};
pub use error::CliError;
pub use output::RunReport;
pub use scenarios::{run_scenario, run_scenario_in, DEFAULT_OUTPUT_DIR};

/// Environment variable naming the output directory when neither `--out` nor
/// the config's `output_dir` is given.
pub const OUT_DIR_ENV: &str = "TRAPCAL_OUT_DIR";
