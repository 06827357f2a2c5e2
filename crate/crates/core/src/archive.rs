//! JSON container for day traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DayTrace, IngestDiagnostics};

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("archive schema version {0} is not supported (expected {ARCHIVE_SCHEMA_VERSION})")]
    SchemaVersion(u64),
    #[error("archive schema: missing field `schema_version`")]
    MissingVersion,
}

/// Day traces plus the configuration and diagnostics of the run that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceArchive {
    pub schema_version: u32,
    pub tool_version: String,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub diagnostics: Option<IngestDiagnostics>,
    pub traces: Vec<DayTrace>,
}

impl TraceArchive {
    pub fn new(traces: Vec<DayTrace>) -> Self {
        Self {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            tool_version: crate::VERSION.to_string(),
            config: serde_json::Value::Null,
            diagnostics: None,
            traces,
        }
    }

    /// Zone ids in order of first appearance.
    pub fn zones(&self) -> Vec<&str> {
        let mut zones: Vec<&str> = Vec::new();
        for t in &self.traces {
            if !zones.contains(&t.zone_id.as_str()) {
                zones.push(&t.zone_id);
            }
        }
        zones
    }

    pub fn zone_traces(&self, zone: &str) -> Vec<DayTrace> {
        self.traces.iter().filter(|t| t.zone_id == zone).cloned().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("archive serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ArchiveError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(ARCHIVE_SCHEMA_VERSION) => {}
            Some(v) => return Err(ArchiveError::SchemaVersion(v)),
            None => return Err(ArchiveError::MissingVersion),
        }
        Ok(serde_json::from_value(raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn round_trip_and_zone_lookup() {
        let d = NaiveDate::from_ymd_opt(2013, 1, 7).unwrap();
        let a = TraceArchive::new(vec![
            DayTrace::new(d, "B", vec![1; 1440]),
            DayTrace::new(d, "A", vec![0; 1440]),
        ]);
        assert_eq!(a.zones(), vec!["B", "A"]);
        assert_eq!(a.zone_traces("A").len(), 1);
        assert_eq!(TraceArchive::from_json(&a.to_json()).unwrap(), a);
        let future = a.to_json().replacen("\"schema_version\":1", "\"schema_version\":9", 1);
        assert!(matches!(TraceArchive::from_json(&future), Err(ArchiveError::SchemaVersion(9))));
    }
}
