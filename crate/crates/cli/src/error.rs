//! Error codes printed as `error[Code]: message`.

use std::fmt::Debug;

use occupancy::archive::ArchiveError;
use occupancy::chain::{ChainError, ModelFormatError};
use occupancy::evaluate::EvaluateError;
use occupancy::ingest::IngestError;
use occupancy::metrics::MetricsError;
use occupancy::simulate::SimulateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("zone {zone:?} not found; available zones: {}", available.join(", "))]
    UnknownZone { zone: String, available: Vec<String> },
    #[error("several zones present ({}); choose one with --zone", .0.join(", "))]
    AmbiguousZone(Vec<String>),
    #[error("no `{0}` given on the command line or in the config file")]
    MissingSetting(&'static str),
    #[error("config: {0}")]
    Config(String),
    #[error("{count} statistic(s) exceed the threshold {threshold}")]
    FlagsRaised { count: usize, threshold: f64 },
}

/// Name of an enum variant from its `Debug` output.
fn variant(e: &impl Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or("Error").to_string()
}

/// Code for the most specific known error in the chain.
pub fn code(err: &anyhow::Error) -> String {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return variant(e);
        }
        if let Some(e) = cause.downcast_ref::<IngestError>() {
            return variant(e);
        }
        if let Some(e) = cause.downcast_ref::<ChainError>() {
            return variant(e);
        }
        if let Some(e) = cause.downcast_ref::<SimulateError>() {
            return variant(e);
        }
        if let Some(e) = cause.downcast_ref::<EvaluateError>() {
            return match e {
                EvaluateError::Metrics(m) => variant(m),
                _ => variant(e),
            };
        }
        if let Some(e) = cause.downcast_ref::<MetricsError>() {
            return variant(e);
        }
        if let Some(e) = cause.downcast_ref::<ModelFormatError>() {
            return match e {
                ModelFormatError::SchemaVersion(_) => "SchemaVersion".into(),
                ModelFormatError::Invalid(inner) => variant(inner),
                _ => "SchemaError".into(),
            };
        }
        if let Some(e) = cause.downcast_ref::<ArchiveError>() {
            return match e {
                ArchiveError::SchemaVersion(_) => "SchemaVersion".into(),
                _ => "SchemaError".into(),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io".into();
        }
    }
    "Error".into()
}

/// One line: contexts and causes joined by `: `.
pub fn message(err: &anyhow::Error) -> String {
    format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ")
}
