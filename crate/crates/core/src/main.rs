use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uamlab::config::{load_config, ExperimentConfig, ExperimentKind};
use uamlab::experiment::run_experiment;
use uamlab::report::{to_json_string, write_report};
use uamlab::{Error, Result};

/// Layer-wise cascade approximation experiments.
#[derive(Parser)]
#[command(name = "uamlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cascade approximating a target function.
    Approximate(RunArgs),
    /// Approximate a posterior through its logits.
    Classify(RunArgs),
    /// Repair a map that merges separated target pairs.
    RepairDemo(RunArgs),
    /// Check a config and print it with defaults filled in.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report path (overrides `output.json`; stdout when neither is set).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Layer-trace CSV path (overrides `output.csv`).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn run(args: &RunArgs, kind: ExperimentKind) -> Result<()> {
    let config: ExperimentConfig = load_config(&args.config)?;
    if config.kind != kind {
        return Err(Error::ValidationError(format!(
            "config kind is {} but the {} command was used",
            config.kind.name(),
            kind.name()
        )));
    }
    let report = run_experiment(&config)?;
    let json = args
        .out
        .clone()
        .or_else(|| config.output.json.as_ref().map(PathBuf::from));
    let csv = args
        .csv
        .clone()
        .or_else(|| config.output.csv.as_ref().map(PathBuf::from));
    match json {
        Some(path) => write_report(&report, &path, csv.as_deref())?,
        None => {
            print!("{}", report.to_json(true));
            if let Some(path) = csv.as_deref() {
                write_csv(path, &report.to_csv())?;
            }
        }
    }
    Ok(())
}

fn write_csv(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Approximate(a) => run(a, ExperimentKind::Approximate),
        Command::Classify(a) => run(a, ExperimentKind::Classify),
        Command::RepairDemo(a) => run(a, ExperimentKind::RepairDemo),
        Command::ValidateConfig { config } => load_config(config).map(|c| print!("{}", to_json_string(&c))),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
