mod config;
mod failure;
mod stages;
mod svg;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{PipelineConfig, DEFAULT_CONFIG};
use failure::Failure;
use stages::{Stages, WorkdirLock};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 invalid configuration or input, \
2 missing upstream artifact, 3 internal error.";

#[derive(Parser)]
#[command(
    name = "forestcurve",
    version,
    about = "Crowd-labelled forest segmentation and entropy-ordered learning curves",
    after_help = EXIT_CODES,
    after_long_help = long_help(),
)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, short, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Work directory for all artifacts (overrides paths.workdir).
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,
    /// Replace every stage seed with this value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic multiband scene and its ground-truth mask.
    Synth,
    /// Superpixel segmentation of the band composite.
    Segment,
    /// Select campaign segments, simulate or import votes, aggregate labels.
    Crowd,
    /// GLCM texture features for every labelled segment.
    Features,
    /// Learning curves for each ordering strategy, plus a full-pool model.
    Curve,
    /// SVG charts of crowd entropy and learning curves.
    Report,
    /// All stages in order.
    Run,
    /// Print the effective configuration.
    Config,
}

fn long_help() -> String {
    format!("{EXIT_CODES}\n\nDefault configuration:\n\n{DEFAULT_CONFIG}")
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.workdir {
        config.paths.workdir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    let config = effective_config(cli)?;
    if let Command::Config = cli.command {
        config.validate()?;
        return toml::to_string(&config).map_err(|e| Failure::Internal(e.to_string()));
    }
    let stages = Stages::new(config)?;
    let _lock = WorkdirLock::acquire(stages.workdir())?;
    match cli.command {
        Command::Synth => stages.synth(),
        Command::Segment => stages.segment(),
        Command::Crowd => stages.crowd(),
        Command::Features => stages.features(),
        Command::Curve => stages.curve(),
        Command::Report => stages.report(),
        Command::Run => stages.run(),
        Command::Config => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(message) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let _ = writeln!(std::io::stdout(), "{message}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
