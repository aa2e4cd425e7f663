use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trapcal_cli::{run_scenario_in, validate_config, CliError, Scenario, ScenarioConfig, DEFAULT_OUTPUT_DIR, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "trapcal", version, about = "Run trapped-ion stray-field calibration scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for Monte Carlo trials (results do not depend on it).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config file and list every violation.
    Validate { config: PathBuf },
    /// Print the available scenarios.
    ListScenarios,
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    validate_config(&raw)
}

fn output_dir(flag: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                    .map_err(|e| CliError::ConfigInvalid(vec![format!("--threads: {e}")]))?;
            }
            let dir = output_dir(out, &cfg);
            let report = run_scenario_in(&cfg, &dir)?;
            println!(
                "{} (seed {}) finished in {:.2} s, wrote {} files to {}",
                report.scenario,
                report.seed,
                report.wall_time_s,
                report.outputs.len(),
                dir.display()
            );
            for (k, v) in &report.metrics {
                println!("  {k} = {v}");
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}: valid `{}` config", config.display(), cfg.scenario);
        }
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<18} {}", s.name(), s.summary());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
