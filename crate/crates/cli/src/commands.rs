use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use occupancy::chain::{build_state_binning_with_max, default_state_count, learn_model, LearnOptions, StateBinning};
use occupancy::evaluate::{evaluate_zone, EvaluationReport};
use occupancy::ingest::{write_event_csv, write_wide_csv, DayTrace};
use occupancy::metrics::{HistogramSpec, OverflowPolicy};
use occupancy::simulate::{sample_ensemble, InitialState, SimulationConfig};
use occupancy::{InhomogeneousModel, TraceArchive};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{echo, required, DataFormat, EvaluateConfig, GenerateConfig, IngestConfig, PipelineConfig, TrainConfig};
use crate::error::CliError;
use crate::output::write_atomic;

pub fn read_archive(path: &Path) -> Result<TraceArchive> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TraceArchive::from_json(&text).with_context(|| format!("reading {}", path.display()))
}

pub fn read_model(path: &Path) -> Result<InhomogeneousModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    InhomogeneousModel::from_json(&text).with_context(|| format!("reading {}", path.display()))
}

/// The requested zone, or the only zone when none was requested.
fn pick_zone(zones: &[&str], wanted: Option<&str>) -> Result<String, CliError> {
    let available = || zones.iter().map(|z| z.to_string()).collect::<Vec<_>>();
    match wanted {
        Some(z) if zones.contains(&z) => Ok(z.to_string()),
        Some(z) => Err(CliError::UnknownZone {
            zone: z.to_string(),
            available: available(),
        }),
        None if zones.len() == 1 => Ok(zones[0].to_string()),
        None => Err(CliError::AmbiguousZone(available())),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes")
}

fn write_traces_csv(traces: &[DayTrace], format: DataFormat, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        DataFormat::EventCsv => write_event_csv(traces, &mut buf)?,
        DataFormat::WideCsv => write_wide_csv(traces, &mut buf)?,
    }
    write_atomic(path, &buf)
}

pub fn ingest(cfg: &IngestConfig) -> Result<TraceArchive> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let file = File::open(input).with_context(|| format!("reading {}", input.display()))?;
    let outcome = occupancy::ingest::ingest(BufReader::new(file), cfg.format.into(), &cfg.regularize_options())
        .with_context(|| format!("reading {}", input.display()))?;
    let mut archive = TraceArchive::new(outcome.traces);
    archive.config = echo("ingest", cfg);
    archive.diagnostics = Some(outcome.diagnostics);
    write_atomic(output, archive.to_json().as_bytes())?;
    Ok(archive)
}

pub fn train(cfg: &TrainConfig) -> Result<InhomogeneousModel> {
    let archive_path = required(&cfg.archive, "archive")?;
    let output = required(&cfg.output, "output")?;
    let archive = read_archive(archive_path)?;
    let zone = pick_zone(&archive.zones(), cfg.zone.as_deref())?;
    let options = LearnOptions {
        n_states: cfg.states,
        smoothing: cfg.smoothing,
        max_count: cfg.max_count,
    };
    let mut model = learn_model(&archive.zone_traces(&zone), &options).with_context(|| format!("training zone {zone:?}"))?;
    model.metadata.config = echo("train", cfg);
    write_atomic(output, model.to_json().as_bytes())?;
    Ok(model)
}

pub fn generate(cfg: &GenerateConfig) -> Result<TraceArchive> {
    let model_path = required(&cfg.model, "model")?;
    let output = required(&cfg.output, "output")?;
    let model = read_model(model_path)?;
    let sim = SimulationConfig {
        n_days: cfg.days,
        seed: cfg.seed,
        initial_state: cfg.initial_state.map_or(InitialState::EmpiricalMidnight, InitialState::Fixed),
        output_step_minutes: cfg.output_step,
        ..SimulationConfig::default()
    };
    let days = sample_ensemble(&model, &sim).with_context(|| format!("sampling from {}", model_path.display()))?;
    let mut archive = TraceArchive::new(days);
    archive.config = echo("generate", cfg);
    write_atomic(output, archive.to_json().as_bytes())?;
    if let Some(csv) = &cfg.csv {
        write_traces_csv(&archive.traces, cfg.format, csv)?;
    }
    Ok(archive)
}

fn histogram_spec(bin_width: f64, max_duration: f64) -> Result<HistogramSpec> {
    HistogramSpec::uniform(0.0, max_duration, bin_width, OverflowPolicy::ClampToLastBin).context("duration histogram")
}

fn check_threshold(threshold: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(CliError::Config(format!("threshold must lie in [0, 1], got {threshold}")))
    }
}

/// Binning from the model if given, else equal-mass bins over the measured counts.
fn evaluation_binning(model: Option<&InhomogeneousModel>, states: Option<usize>, measured: &[DayTrace], predicted: &[DayTrace]) -> Result<StateBinning> {
    if let Some(model) = model {
        return Ok(model.binning.clone());
    }
    let max = |t: &[DayTrace]| t.iter().map(DayTrace::max_value).max().unwrap_or(0);
    let measured_max = max(measured);
    let n_states = states.unwrap_or_else(|| default_state_count(measured_max));
    Ok(build_state_binning_with_max(measured, n_states, Some(max(predicted)))?)
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<EvaluationReport> {
    let measured_path = required(&cfg.measured, "measured")?;
    let predicted_path = required(&cfg.predicted, "predicted")?;
    let output = required(&cfg.output, "output")?;
    check_threshold(cfg.threshold)?;
    let spec = histogram_spec(cfg.bin_width, cfg.max_duration)?;
    let model = cfg.model.as_deref().map(read_model).transpose()?;
    let measured = read_archive(measured_path)?;
    let predicted = read_archive(predicted_path)?;
    let wanted = cfg.zone.as_deref().or(model.as_ref().map(|m| m.zone_id.as_str()));
    let zone = match wanted {
        Some(z) => pick_zone(&measured.zones(), Some(z))?,
        None => pick_zone(&predicted.zones(), None)?,
    };
    let m = measured.zone_traces(&zone);
    let p = predicted.zone_traces(&zone);
    if p.is_empty() {
        return Err(CliError::UnknownZone {
            zone,
            available: predicted.zones().iter().map(|z| z.to_string()).collect(),
        })
        .with_context(|| format!("reading {}", predicted_path.display()));
    }
    let binning = evaluation_binning(model.as_ref(), cfg.states, &m, &p)?;
    let mut report = evaluate_zone(&m, &p, &binning, &spec, cfg.threshold).with_context(|| format!("evaluating zone {zone:?}"))?;
    report.config = echo("evaluate", cfg);
    write_atomic(output, to_json(&report).as_bytes())?;
    if let Some(csv) = &cfg.csv {
        let mut buf = Vec::new();
        report.write_tidy_csv(&mut buf)?;
        write_atomic(csv, &buf)?;
    }
    Ok(report)
}

/// Per-zone outcome of a pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct ZoneSummary {
    pub zone_id: String,
    pub directory: PathBuf,
    pub n_states: usize,
    pub measured_days: usize,
    pub max_timeseries_njsd: f64,
    pub duration_njsd: Vec<Option<f64>>,
    pub flags: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub config: serde_json::Value,
    pub zones: Vec<ZoneSummary>,
    pub passed: bool,
}

/// Directory name for a zone: ASCII alphanumerics, `-` and `_` kept, the rest `_`.
fn zone_dir(zone: &str) -> String {
    zone.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Ingest, then train, generate and evaluate every zone. Each step writes the
/// same artifact its stand-alone command would, with its own config echoed.
pub fn pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let input = required(&cfg.input, "input")?;
    let out_dir = required(&cfg.out_dir, "out_dir")?;
    check_threshold(cfg.threshold)?;
    histogram_spec(cfg.bin_width, cfg.max_duration)?;
    let archive_path = out_dir.join("archive.json");
    let archive = ingest(&IngestConfig {
        input: Some(input.clone()),
        output: Some(archive_path.clone()),
        format: cfg.format,
        grid_step: cfg.grid_step,
        initial_value: cfg.initial_value,
        gap_threshold: cfg.gap_threshold,
    })?;
    let all = archive.zones();
    let zones: Vec<(usize, String)> = match &cfg.zone {
        Some(z) => {
            let z = pick_zone(&all, Some(z))?;
            vec![(all.iter().position(|a| *a == z).unwrap_or(0), z)]
        }
        None => all.iter().map(|z| z.to_string()).enumerate().collect(),
    };
    let mut dirs: Vec<String> = zones.iter().map(|(_, z)| zone_dir(z)).collect();
    dirs.sort();
    dirs.dedup();
    if dirs.len() != zones.len() {
        return Err(CliError::Config("two zone names map to the same directory name".into()).into());
    }
    let results = zones
        .par_iter()
        .map(|(index, zone)| run_zone(cfg, &archive_path, out_dir, *index, zone))
        .collect::<Result<Vec<_>>>()?;
    let summary = PipelineSummary {
        config: echo("pipeline", cfg),
        passed: results.iter().all(|z| z.passed),
        zones: results,
    };
    write_atomic(&out_dir.join("summary.json"), to_json(&summary).as_bytes())?;
    Ok(summary)
}

fn run_zone(cfg: &PipelineConfig, archive_path: &Path, out_dir: &Path, index: usize, zone: &str) -> Result<ZoneSummary> {
    let dir = out_dir.join("zones").join(zone_dir(zone));
    let model_path = dir.join("model.json");
    let predicted_path = dir.join("predicted.json");
    let model = train(&TrainConfig {
        archive: Some(archive_path.to_path_buf()),
        output: Some(model_path.clone()),
        zone: Some(zone.to_string()),
        states: cfg.states,
        smoothing: cfg.smoothing,
        max_count: cfg.max_count,
    })?;
    generate(&GenerateConfig {
        model: Some(model_path.clone()),
        output: Some(predicted_path.clone()),
        days: cfg.days,
        seed: cfg.seed.wrapping_add(index as u64),
        output_step: cfg.grid_step,
        ..GenerateConfig::default()
    })?;
    let report = evaluate(&EvaluateConfig {
        measured: Some(archive_path.to_path_buf()),
        predicted: Some(predicted_path),
        output: Some(dir.join("report.json")),
        csv: Some(dir.join("report.csv")),
        zone: Some(zone.to_string()),
        model: Some(model_path),
        states: None,
        threshold: cfg.threshold,
        bin_width: cfg.bin_width,
        max_duration: cfg.max_duration,
        strict: cfg.strict,
    })?;
    Ok(ZoneSummary {
        zone_id: zone.to_string(),
        directory: dir,
        n_states: model.n_states(),
        measured_days: report.measured_days,
        max_timeseries_njsd: report.max_timeseries_njsd(),
        duration_njsd: report.duration_njsd(),
        flags: report.flags.len(),
        passed: report.passed(),
    })
}
