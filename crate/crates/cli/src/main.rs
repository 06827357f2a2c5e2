//! `occupancy`: ingest occupancy logs, train slot models, generate synthetic
//! days and score them against measurements.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{load_file, resolve, DataFormat, EvaluateConfig, GapThreshold, GenerateConfig, IngestConfig, PipelineConfig, TrainConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "occupancy", version, about = "Learn, generate and evaluate occupancy models")]
struct Cli {
    /// TOML file of settings, or a JSON artifact whose embedded config is reused.
    /// Flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regularize a CSV log into a day-trace archive.
    Ingest(IngestArgs),
    /// Learn a model for one zone of an archive.
    Train(TrainArgs),
    /// Sample synthetic days from a model.
    Generate(GenerateArgs),
    /// Compare a predicted archive against a measured one.
    Evaluate(EvaluateArgs),
    /// Ingest, train, generate and evaluate every zone in one go.
    Pipeline(PipelineArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    /// Input CSV.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Archive JSON to write.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// Input layout [default: event-csv].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<DataFormat>,
    /// Grid spacing in minutes [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_step: Option<u32>,
    /// Value before a zone's first record [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_value: Option<u32>,
    /// Gaps longer than this many minutes drop the days they enclose, or `none` [default: 1440].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_threshold: Option<GapThreshold>,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Archive JSON from `ingest`.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    archive: Option<PathBuf>,
    /// Model JSON to write.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// Zone to train; optional when the archive holds one zone.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    zone: Option<String>,
    /// Number of states M [default: min(N + 1, 8)].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
    /// Pseudo-count added to observed jumps [default: 0.5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<f64>,
    /// Treat counts up to this value as possible even if unseen.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_count: Option<u32>,
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Model JSON from `train`.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// Archive JSON to write.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// Number of days [default: 250].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    days: Option<usize>,
    /// RNG seed [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Output grid spacing in minutes [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_step: Option<u32>,
    /// Start every day in this state instead of sampling it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state: Option<usize>,
    /// Also export the days as CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
    /// CSV layout for --csv [default: event-csv].
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<DataFormat>,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Measured archive JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    measured: Option<PathBuf>,
    /// Predicted archive JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted: Option<PathBuf>,
    /// Report JSON to write.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// Also write the report as tidy CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
    /// Zone to compare; optional when it is unambiguous.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    zone: Option<String>,
    /// Model whose state binning is used.
    #[arg(long, conflicts_with = "states")]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    /// Without --model, bin measured counts into this many states.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
    /// NJSD above this raises a flag [default: 0.15].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    /// Duration histogram bin width in minutes [default: 10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_width: Option<f64>,
    /// Durations at or past this many minutes share the last bin [default: 1440].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_duration: Option<f64>,
    /// Exit with status 2 when any flag is raised.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    strict: bool,
}

#[derive(Args, Serialize)]
struct PipelineArgs {
    /// Input CSV.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<DataFormat>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_step: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_value: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_threshold: Option<GapThreshold>,
    /// Only this zone [default: every zone].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    zone: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_count: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    days: Option<usize>,
    /// Zone i is generated with seed + i [default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_width: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_duration: Option<f64>,
    /// Exit with status 2 when any zone raises a flag.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    strict: bool,
}

const EXIT_ERROR: u8 = 1;
const EXIT_FLAGGED: u8 = 2;

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = cli.config.as_deref().map(load_file).transpose()?;
    let file = file.as_ref();
    match cli.command {
        Command::Ingest(args) => {
            let cfg: IngestConfig = resolve(file, &args)?;
            let archive = commands::ingest(&cfg)?;
            let diag = archive.diagnostics.as_ref().expect("ingest records diagnostics");
            println!("{} records, {} zones, {} day traces", diag.records, diag.zones.len(), archive.traces.len());
            for z in &diag.zones {
                println!(
                    "  {}: {} days, {} partial, {} outage, max value {}",
                    z.zone_id,
                    z.days,
                    z.partial_days.len(),
                    z.outage_days.len(),
                    z.max_value
                );
            }
        }
        Command::Train(args) => {
            let cfg: TrainConfig = resolve(file, &args)?;
            let model = commands::train(&cfg)?;
            println!(
                "zone {}: {} states from {} days, {} fallback rows, {} remaps",
                model.zone_id,
                model.n_states(),
                model.metadata.n_days,
                model.metadata.fallback_rows.len(),
                model.metadata.remaps.len()
            );
        }
        Command::Generate(args) => {
            let cfg: GenerateConfig = resolve(file, &args)?;
            let archive = commands::generate(&cfg)?;
            println!("{} days generated", archive.traces.len());
        }
        Command::Evaluate(args) => {
            let cfg: EvaluateConfig = resolve(file, &args)?;
            let report = commands::evaluate(&cfg)?;
            let durations: Vec<String> = report.duration_njsd().into_iter().map(fmt_opt).collect();
            println!(
                "zone {}: max per-minute NJSD {:.4}, duration NJSD [{}], {} flags",
                report.zone_id,
                report.max_timeseries_njsd(),
                durations.join(", "),
                report.flags.len()
            );
            if cfg.strict && !report.passed() {
                return flagged(report.flags.len(), cfg.threshold);
            }
        }
        Command::Pipeline(args) => {
            let cfg: PipelineConfig = resolve(file, &args)?;
            let summary = commands::pipeline(&cfg)?;
            for z in &summary.zones {
                let durations: Vec<String> = z.duration_njsd.iter().copied().map(fmt_opt).collect();
                println!(
                    "{} {}: max per-minute NJSD {:.4}, duration NJSD [{}], {} flags",
                    if z.passed { "PASS" } else { "FAIL" },
                    z.zone_id,
                    z.max_timeseries_njsd,
                    durations.join(", "),
                    z.flags
                );
            }
            if cfg.strict && !summary.passed {
                let count = summary.zones.iter().map(|z| z.flags).sum();
                return flagged(count, cfg.threshold);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn flagged(count: usize, threshold: f64) -> Result<ExitCode> {
    let err = anyhow::Error::from(CliError::FlagsRaised { count, threshold });
    eprintln!("error[{}]: {}", error::code(&err), error::message(&err));
    Ok(ExitCode::from(EXIT_FLAGGED))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error[Usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {}", error::code(&err), error::message(&err));
            ExitCode::from(EXIT_ERROR)
        }
    }
}
