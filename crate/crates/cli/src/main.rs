mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use ambientis::motion::SpeedDomain;
use ambientis::stats::PairingStrategy;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

/// Privacy-preserving behavioural monitoring: simulate scenarios, extract
/// per-frame features, aggregate them and compare phases.
#[derive(Debug, Parser)]
#[command(name = "ambientis", version)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a frame fixture, sidecar and ground-truth ledger from a scenario.
    Simulate(SimulateArgs),
    /// Run the feature pipeline over a fixture or a scenario stream.
    Run(RunArgs),
    /// Roll per-frame features into hourly and daily CSV.
    Aggregate(AggregateArgs),
    /// Paired comparison of normal and intervention days.
    Compare(CompareArgs),
    /// Plot-ready hourly profiles, daily series and the night-band change.
    Report(ReportArgs),
    /// Check a directory of outputs for image-like payloads.
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (.scn, TOML).
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the ledger and phase labels but no frames.
    #[arg(long)]
    pub ledger_only: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Recorded frame fixture.
    #[arg(long, conflicts_with = "scenario")]
    pub fixture: Option<PathBuf>,
    /// Scenario-channel sidecar for the fixture.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Stream a scenario directly instead of reading a fixture.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub frame_interval_ms: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub tz_offset_min: Option<i32>,
    /// Active-pixel threshold on summed |ΔRGB| (1..=765).
    #[arg(long)]
    pub threshold: Option<u32>,
    #[arg(long)]
    pub speed_domain: Option<SpeedDomain>,
    #[arg(long)]
    pub pose_detector: Option<String>,
    #[arg(long)]
    pub object_detector: Option<String>,
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Per-frame features (JSONL).
    pub features: PathBuf,
    /// `date,phase` CSV.
    #[arg(long, conflicts_with = "intervention_from")]
    pub phases: Option<PathBuf>,
    /// First local date of the intervention phase.
    #[arg(long)]
    pub intervention_from: Option<NaiveDate>,
    #[arg(long)]
    pub frame_interval_ms: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub tz_offset_min: Option<i32>,
    /// Leave out days monitored for less than this fraction.
    #[arg(long)]
    pub min_coverage: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Daily CSV of the normal phase.
    pub normal: PathBuf,
    /// Daily CSV of the intervention phase.
    pub intervention: PathBuf,
    #[arg(long)]
    pub strategy: Option<PairingStrategy>,
    /// Pair the hourly appearance row by hour slot instead of by day.
    #[arg(long)]
    pub per_hour_slot: bool,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Daily CSV holding both phases.
    pub daily: PathBuf,
    /// Inclusive hour band for the change metric, e.g. `0-5`.
    #[arg(long)]
    pub band: Option<String>,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 48)]
    pub height: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Run(a) => commands::run(&cfg, a),
        Command::Aggregate(a) => commands::aggregate(&cfg, a),
        Command::Compare(a) => commands::compare(&cfg, a),
        Command::Report(a) => commands::report(&cfg, a),
        Command::Scan(a) => commands::scan(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ambientis: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
