use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use rms_core::harness::{
    emit_report, estimate_observations, read_observations, run_experiment, EstimateConfig, ExperimentConfig,
    ReportFormat,
};
use rms_core::hyperplane::{diagnose_surface, DiagnoseConfig};
use rms_core::RmsError;

#[derive(Parser)]
#[command(name = "rms", version, about = "ReLU-based maximum score estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Md => ReportFormat::Markdown,
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write only this format; default writes csv, md and json.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Estimate θ on a CSV sample and print it as JSON.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the surface matrices V and Ω as JSON.
    DiagnoseV {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Input problems exit with 2, estimation failures with 3.
enum Failure {
    Input(String),
    Run(String),
}

impl From<RmsError> for Failure {
    fn from(e: RmsError) -> Self {
        match e {
            RmsError::Config(_) | RmsError::DimensionMismatch { .. } | RmsError::Json(_) | RmsError::Csv(_) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let file = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(RmsError::from)?;
    writeln!(out).map_err(RmsError::from)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out, format } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let report = run_experiment(&cfg)?;
            let formats = match format {
                Some(f) => vec![f.into()],
                None => vec![ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json],
            };
            for f in formats {
                let path = emit_report(&report, f, &dir).map_err(|e| Failure::Run(e.to_string()))?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Estimate { data, config } => {
            let cfg: EstimateConfig = read_json(&config)?;
            let file = File::open(&data).map_err(|e| Failure::Input(format!("{}: {e}", data.display())))?;
            let sample = read_observations(BufReader::new(file), cfg.support)?;
            print_json(&estimate_observations(&sample, &cfg)?)
        }
        Command::DiagnoseV { config } => {
            let cfg: DiagnoseConfig = read_json(&config)?;
            print_json(&diagnose_surface(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
