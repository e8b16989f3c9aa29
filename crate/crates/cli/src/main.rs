mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxbank::pipeline::{BankMode, ExtractionPreset, Regime};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "ctxbank", version, about = "Build personal context banks and evaluate them on a benchmark manifest")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Preset {
    Wearer,
    Phases,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Copy directories of pre-extracted frames into the media store.
    Ingest {
        /// Directory with one subdirectory of frames per clip.
        clips: PathBuf,
    },
    /// Build a bank from a JSON list of context items.
    BuildBank {
        #[arg(long, default_value = "user")]
        owner: String,
        #[arg(long, value_enum, default_value = "wearer")]
        preset: Preset,
        items: PathBuf,
    },
    /// Answer one manifest instance against a saved bank.
    Query {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        instance: String,
        /// descriptors-only, all-evidence or adaptive.
        #[arg(long, default_value = "adaptive")]
        mode: BankMode,
    },
    /// Run a list of regimes over a manifest and write records, traces and a report.
    Evaluate {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "no-context,language-ctx:1,language-ctx:max,visual-ctx:1,visual-ctx:max,bank:adaptive")]
        regimes: Vec<Regime>,
    },
    /// Score every prediction CSV in a directory into a markdown table.
    Report { records: PathBuf },
    /// Summarize construction logs and adaptive query traces under a directory.
    Stats { logs: PathBuf },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { clips } => commands::ingest(&cli.overrides, &clips),
        Command::BuildBank { owner, preset, items } => {
            let preset = match preset {
                Preset::Wearer => ExtractionPreset::Wearer,
                Preset::Phases => ExtractionPreset::Phases,
            };
            commands::build_bank(&cli.overrides, &owner, preset, &items)
        }
        Command::Query {
            bank,
            manifest,
            instance,
            mode,
        } => commands::query(&cli.overrides, &bank, &manifest, &instance, mode),
        Command::Evaluate { manifest, regimes } => commands::evaluate(&cli.overrides, &manifest, &regimes),
        Command::Report { records } => commands::report(&cli.overrides, &records),
        Command::Stats { logs } => commands::stats(&cli.overrides, &logs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
