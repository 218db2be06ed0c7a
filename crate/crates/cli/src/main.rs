//! `fdimit`: dataset generation, Stage-I labeling and training, Stage-II
//! forecaster training and assignment, mitigation runs and reports.

mod commands;
mod steps;
mod workdir;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fdimit::config::RunConfig;

use crate::steps::Step;
use crate::workdir::{Workdir, CONFIG_FILE};

#[derive(Debug, Parser)]
#[command(name = "fdimit", version, about = "Two-stage false-data-injection mitigation pipeline")]
struct Cli {
    /// Directory holding every input and output.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Worker threads for frame processing and model training.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Bundled configuration: desk or paper.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML configuration, relative to the work directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training and test series.
    GenData {
        /// Total training samples, split evenly across partitions.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Scalogram stacks, entropy report and level thresholds.
    Label,
    /// Train the Stage-I complexity classifier.
    TrainClassifier,
    /// Train and time the five forecasters.
    TrainForecasters,
    /// Assign one forecaster per complexity level.
    Assign,
    /// Closed-loop formation run under attack, with and without mitigation.
    Mitigate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        scenario: u8,
    },
    /// Stacked selection against each single forecaster on the test series.
    Compare,
    /// Inference time and RMSE over the overlap grid.
    SweepOverlap {
        /// Interleaved timing passes; the fastest is kept.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Replace Stage I with plain averaging over three and five models.
    AblateStage1,
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

impl Command {
    fn step(&self) -> Option<Step> {
        Some(match self {
            Command::GenData { .. } => Step::GenData,
            Command::Label => Step::Label,
            Command::TrainClassifier => Step::TrainClassifier,
            Command::TrainForecasters => Step::TrainForecasters,
            Command::Assign => Step::Assign,
            Command::Mitigate { .. } => Step::Mitigate,
            Command::Compare => Step::Compare,
            Command::SweepOverlap { .. } => Step::SweepOverlap,
            Command::AblateStage1 => Step::AblateStage1,
            Command::ShowConfig => return None,
        })
    }
}

/// Invalid or inconsistent configuration; exits with 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.downcast_ref::<ConfigError>().is_some()
        || matches!(e.downcast_ref::<fdimit::Error>(), Some(fdimit::Error::Config(_)));
    if config {
        2
    } else {
        3
    }
}

/// `--config`, then `--preset`, then the work directory's saved config when
/// `saved` is set, then the desk preset.
fn resolve_config(cli: &Cli, wd: &Workdir, saved: bool) -> Result<RunConfig> {
    let cfg = if let Some(p) = &cli.config {
        let path = wd.path(&p.to_string_lossy());
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("reading {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)?
    } else if let Some(name) = &cli.preset {
        RunConfig::preset(name)?
    } else if saved && wd.path(CONFIG_FILE).is_file() {
        let text = std::fs::read_to_string(wd.path(CONFIG_FILE)).context("reading saved config")?;
        RunConfig::from_toml(&text)?
    } else {
        RunConfig::desk()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    steps::validate_graph().map_err(ConfigError)?;
    if cli.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    let wd = Workdir::new(&cli.workdir);
    let mut cfg = resolve_config(&cli, &wd, !matches!(cli.command, Command::GenData { .. }))?;
    if let Some(step) = cli.command.step() {
        log::debug!("{step} with config_hash={}", cfg.hash());
        if step != Step::GenData {
            wd.require(step, &cfg)?;
        }
    }
    let jobs = cli.jobs;
    match cli.command {
        Command::GenData { samples, seed } => {
            if let Some(n) = samples {
                cfg.generator.total_samples = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::gen_data(&wd, &cfg)
        }
        Command::Label => commands::label(&wd, &cfg, jobs),
        Command::TrainClassifier => commands::train_classifier(&wd, &cfg),
        Command::TrainForecasters => commands::train_forecasters(&wd, &cfg, jobs),
        Command::Assign => commands::assign(&wd, &cfg),
        Command::Mitigate { scenario } => commands::mitigate(&wd, &cfg, scenario),
        Command::Compare => commands::compare(&wd, &cfg),
        Command::SweepOverlap { repeats } => commands::sweep_overlap(&wd, &cfg, jobs, repeats),
        Command::AblateStage1 => commands::ablate_stage1(&wd, &cfg),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_exit_with_two() {
        assert_eq!(exit_code(&ConfigError("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::Error::from(RunConfig::preset("huge").unwrap_err())), 2);
        let io = fdimit::Error::Io(std::io::Error::other("disk"));
        assert_eq!(exit_code(&anyhow::Error::from(io).context("writing")), 3);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::parse_from(["fdimit", "mitigate", "--scenario", "2", "--jobs", "2"]);
        assert!(matches!(cli.command, Command::Mitigate { scenario: 2 }));
        assert!(Cli::try_parse_from(["fdimit", "mitigate", "--scenario", "3"]).is_err());
    }
}
