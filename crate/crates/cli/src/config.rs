//! Run configuration: defaults, an optional config file, then flags.
//!
//! A config file is either a TOML table of keys or any JSON artifact written
//! by this tool, in which case the config it embeds is used. Keys a command
//! does not know are ignored, so one file can serve several commands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::ValueEnum;
use occupancy::evaluate::DEFAULT_THRESHOLD;
use occupancy::ingest::{CsvFormat, RegularizeOptions, MINUTES_PER_DAY};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// `timestamp,<zone>,...` with one column per zone.
    #[value(alias = "wide")]
    WideCsv,
    /// `timestamp,zone,value` with one row per event.
    #[default]
    #[value(alias = "event")]
    EventCsv,
}

impl From<DataFormat> for CsvFormat {
    fn from(f: DataFormat) -> Self {
        match f {
            DataFormat::WideCsv => CsvFormat::WideCsv,
            DataFormat::EventCsv => CsvFormat::EventCsv,
        }
    }
}

/// Gap length in minutes above which enclosed days count as outages, or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapThreshold {
    Minutes(u32),
    Off,
}

impl Default for GapThreshold {
    fn default() -> Self {
        Self::Minutes(MINUTES_PER_DAY)
    }
}

impl GapThreshold {
    pub fn minutes(self) -> Option<u32> {
        match self {
            Self::Minutes(m) => Some(m),
            Self::Off => None,
        }
    }
}

impl FromStr for GapThreshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" | "off" => Ok(Self::Off),
            m => m
                .parse()
                .map(Self::Minutes)
                .map_err(|_| format!("expected minutes or `none`, got {s:?}")),
        }
    }
}

impl fmt::Display for GapThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Minutes(m) => write!(f, "{m}"),
            Self::Off => f.write_str("none"),
        }
    }
}

impl Serialize for GapThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Minutes(m) => s.serialize_u32(*m),
            Self::Off => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for GapThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Minutes(u32),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Minutes(m) => Ok(Self::Minutes(m)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: DataFormat,
    pub grid_step: u32,
    pub initial_value: u32,
    pub gap_threshold: GapThreshold,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            format: DataFormat::default(),
            grid_step: 1,
            initial_value: 0,
            gap_threshold: GapThreshold::default(),
        }
    }
}

impl IngestConfig {
    pub fn regularize_options(&self) -> RegularizeOptions {
        RegularizeOptions {
            grid_step_minutes: self.grid_step,
            initial_value: self.initial_value,
            gap_threshold_minutes: self.gap_threshold.minutes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub archive: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub zone: Option<String>,
    /// `None` picks `min(N + 1, 8)`.
    pub states: Option<usize>,
    pub smoothing: f64,
    pub max_count: Option<u32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            archive: None,
            output: None,
            zone: None,
            states: None,
            smoothing: occupancy::chain::DEFAULT_SMOOTHING,
            max_count: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub days: usize,
    pub seed: u64,
    pub output_step: u32,
    /// Fixed midnight state; `None` samples it.
    pub initial_state: Option<usize>,
    pub csv: Option<PathBuf>,
    pub format: DataFormat,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            model: None,
            output: None,
            days: 250,
            seed: 0,
            output_step: 1,
            initial_state: None,
            csv: None,
            format: DataFormat::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub measured: Option<PathBuf>,
    pub predicted: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub zone: Option<String>,
    /// Take the state binning from this model.
    pub model: Option<PathBuf>,
    /// Otherwise bin the measured counts into this many states.
    pub states: Option<usize>,
    pub threshold: f64,
    pub bin_width: f64,
    pub max_duration: f64,
    pub strict: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            measured: None,
            predicted: None,
            output: None,
            csv: None,
            zone: None,
            model: None,
            states: None,
            threshold: DEFAULT_THRESHOLD,
            bin_width: 10.0,
            max_duration: f64::from(MINUTES_PER_DAY),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub format: DataFormat,
    pub grid_step: u32,
    pub initial_value: u32,
    pub gap_threshold: GapThreshold,
    /// Only this zone; all zones when unset.
    pub zone: Option<String>,
    pub states: Option<usize>,
    pub smoothing: f64,
    pub max_count: Option<u32>,
    pub days: usize,
    /// Zone `i` (in archive order) is generated with `seed + i`.
    pub seed: u64,
    pub threshold: f64,
    pub bin_width: f64,
    pub max_duration: f64,
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ingest = IngestConfig::default();
        let train = TrainConfig::default();
        let generate = GenerateConfig::default();
        let evaluate = EvaluateConfig::default();
        Self {
            input: None,
            out_dir: None,
            format: ingest.format,
            grid_step: ingest.grid_step,
            initial_value: ingest.initial_value,
            gap_threshold: ingest.gap_threshold,
            zone: None,
            states: train.states,
            smoothing: train.smoothing,
            max_count: train.max_count,
            days: generate.days,
            seed: generate.seed,
            threshold: evaluate.threshold,
            bin_width: evaluate.bin_width,
            max_duration: evaluate.max_duration,
            strict: false,
        }
    }
}

/// Reads a config file into a flat JSON object.
pub fn load_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let doc: Value = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        serde_json::to_value(table)?
    };
    let embedded = doc
        .get("config")
        .or_else(|| doc.get("metadata").and_then(|m| m.get("config")))
        .filter(|c| c.is_object())
        .unwrap_or(&doc);
    match embedded {
        Value::Object(map) => Ok(map.clone()),
        _ => Err(CliError::Config(format!("{}: expected a table of keys", path.display())).into()),
    }
}

/// Defaults, overridden by `file`, overridden by every flag that was given.
pub fn resolve<T, F>(file: Option<&Map<String, Value>>, flags: &F) -> Result<T>
where
    T: DeserializeOwned,
    F: Serialize,
{
    let mut merged = file.cloned().unwrap_or_default();
    if let Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    // Echoed artifacts carry these; they are not settings.
    merged.remove("command");
    merged.remove("tool_version");
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()).into())
}

/// The resolved config as embedded in artifacts.
pub fn echo<T: Serialize>(command: &str, config: &T) -> Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), command.into());
        map.insert("tool_version".into(), occupancy::VERSION.into());
    }
    v
}

pub fn required<'a, T>(value: &'a Option<T>, key: &'static str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or(CliError::MissingSetting(key))
}
