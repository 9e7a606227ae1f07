mod commands;
mod error;
mod manifest;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{GraphOptions, TrainOptions};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

/// Counterfactual explanations for note-level classifiers on symbolic scores.
#[derive(Parser, Debug)]
#[command(name = "scorecf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Musicxml,
    Graph,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the score graph of a piece and print node and edge counts.
    Build {
        #[arg(long)]
        input: PathBuf,
        /// Output directory (default: $SCORECF_OUT, then `scorecf-out`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        beat_length: Option<String>,
        #[arg(long)]
        measure_length: Option<String>,
        #[arg(long)]
        no_hierarchy: bool,
    },
    /// Search a sequence of counterfactual explanations for one note.
    Explain {
        #[command(flatten)]
        run: RunManifest,
        /// TOML file with the same keys as the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the effective settings as TOML and continue.
        #[arg(long)]
        save_config: Option<PathBuf>,
    },
    /// Run a grid of explanation settings and aggregate the metrics.
    Experiment {
        #[command(flatten)]
        run: RunManifest,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        save_config: Option<PathBuf>,
    },
    /// Re-export the steps of a saved report.
    Export {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        format: ExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the reference graph network on generated scores.
    Train {
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        pieces: usize,
        #[arg(long, default_value_t = 16)]
        notes: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn effective(run: RunManifest, config: Option<PathBuf>, save: Option<PathBuf>) -> Result<RunManifest> {
    let run = match config {
        Some(path) => run.merged(RunManifest::load(&path)?),
        None => run,
    };
    if let Some(path) = save {
        std::fs::write(&path, run.to_toml()).map_err(|source| CliError::Write { path, source })?;
    }
    Ok(run)
}

fn out_or_default(out: Option<PathBuf>) -> PathBuf {
    RunManifest {
        out,
        ..RunManifest::default()
    }
    .out_dir()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build {
            input,
            out,
            beat_length,
            measure_length,
            no_hierarchy,
        } => {
            let m = RunManifest {
                beat_length,
                measure_length,
                no_hierarchy,
                ..RunManifest::default()
            };
            commands::cmd_build(&input, &out_or_default(out), &GraphOptions::from_manifest(&m)?)
        }
        Command::Explain {
            run,
            config,
            save_config,
        } => commands::cmd_explain(&effective(run, config, save_config)?),
        Command::Experiment {
            run,
            config,
            save_config,
        } => commands::cmd_experiment(&effective(run, config, save_config)?),
        Command::Export { report, format, out } => commands::cmd_export(
            &report,
            format != ExportFormat::Graph,
            format != ExportFormat::Musicxml,
            &out_or_default(out),
        ),
        Command::Train {
            out,
            pieces,
            notes,
            epochs,
            learning_rate,
            seed,
        } => commands::cmd_train(
            &TrainOptions {
                pieces,
                notes,
                epochs,
                learning_rate,
                seed,
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
