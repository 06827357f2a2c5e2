//! Occupancy log ingestion.
//!
//! Raw logs come in two shapes: a *wide* table with one column per zone,
//! sampled at a fixed interval, and an *event* table with one
//! `timestamp,zone,value` row per state change. Both are turned into
//! [`OccupancyRecord`]s, forward-filled onto a uniform minute grid
//! ([`regularize`]), restricted to weekdays ([`filter_weekdays`]) and cut
//! into midnight-to-midnight [`DayTrace`]s ([`split_days`]).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error("row {row}: cannot parse timestamp {value:?}")]
    UnparseableTimestamp { row: u64, value: String },
    #[error("row {row}: negative occupancy value {value} for zone {zone:?}")]
    NegativeValue { row: u64, zone: String, value: i64 },
    #[error("input contains no occupancy records")]
    EmptyInput,
    #[error("grid step of {0} minutes does not divide a day")]
    InvalidGridStep(u32),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Layout of an occupancy CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvFormat {
    /// `timestamp,<zone_1>,...,<zone_k>` with one integer cell per zone.
    WideCsv,
    /// `timestamp,zone,value`, one row per observation or event.
    EventCsv,
}

/// One observation of a zone's occupancy value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyRecord {
    pub timestamp: NaiveDateTime,
    pub zone_id: String,
    pub value: u32,
}

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M:%S%.f",
];

/// Parses a naive local timestamp. Offsets, when present, are dropped and the
/// wall-clock reading kept.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            chrono::DateTime::parse_from_rfc3339(s)
                .ok()
                .map(|dt| dt.naive_local())
        })
}

fn parse_value(row: u64, zone: &str, cell: &str) -> Result<Option<u32>, IngestError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let parsed: i64 = match cell.parse::<i64>() {
        Ok(v) => v,
        Err(_) => match cell.parse::<f64>() {
            Ok(f) if f.is_finite() && f.fract() == 0.0 => f as i64,
            _ => {
                return Err(IngestError::MalformedRow {
                    row,
                    reason: format!("value {cell:?} for zone {zone:?} is not an integer"),
                })
            }
        },
    };
    if parsed < 0 {
        return Err(IngestError::NegativeValue {
            row,
            zone: zone.to_string(),
            value: parsed,
        });
    }
    u32::try_from(parsed)
        .map(Some)
        .map_err(|_| IngestError::MalformedRow {
            row,
            reason: format!("value {parsed} is too large"),
        })
}

/// Parses an occupancy CSV into records sorted by timestamp within each zone.
///
/// Records sharing a timestamp keep their file order, so the last one wins
/// once forward-filled. Empty wide-format cells are treated as missing.
pub fn parse_records<R: Read>(source: R, format: CsvFormat) -> Result<Vec<OccupancyRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(IngestError::EmptyInput);
    }
    let mut records = Vec::new();
    match format {
        CsvFormat::WideCsv => {
            if headers.len() < 2 {
                return Err(IngestError::MalformedRow {
                    row: 1,
                    reason: "wide header needs a timestamp column and at least one zone".into(),
                });
            }
            let zones: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
            for row in reader.records() {
                let row = row.map_err(|e| malformed(&e))?;
                let line = row.position().map_or(0, |p| p.line());
                let ts = parse_ts_cell(line, &row[0])?;
                for (zone, cell) in zones.iter().zip(row.iter().skip(1)) {
                    if let Some(value) = parse_value(line, zone, cell)? {
                        records.push(OccupancyRecord {
                            timestamp: ts,
                            zone_id: zone.clone(),
                            value,
                        });
                    }
                }
            }
        }
        CsvFormat::EventCsv => {
            if headers.len() != 3 {
                return Err(IngestError::MalformedRow {
                    row: 1,
                    reason: "event header must be timestamp,zone,value".into(),
                });
            }
            for row in reader.records() {
                let row = row.map_err(|e| malformed(&e))?;
                let line = row.position().map_or(0, |p| p.line());
                let ts = parse_ts_cell(line, &row[0])?;
                let zone = row[1].to_string();
                if zone.is_empty() {
                    return Err(IngestError::MalformedRow {
                        row: line,
                        reason: "empty zone".into(),
                    });
                }
                let value = parse_value(line, &zone, &row[2])?.ok_or_else(|| IngestError::MalformedRow {
                    row: line,
                    reason: "empty value".into(),
                })?;
                records.push(OccupancyRecord {
                    timestamp: ts,
                    zone_id: zone,
                    value,
                });
            }
        }
    }
    // Stable: equal timestamps keep file order.
    let order = zone_order(&records);
    records.sort_by(|a, b| (order[&a.zone_id], a.timestamp).cmp(&(order[&b.zone_id], b.timestamp)));
    Ok(records)
}

fn malformed(e: &csv::Error) -> IngestError {
    let row = e.position().map_or(0, |p| p.line());
    IngestError::MalformedRow {
        row,
        reason: e.to_string(),
    }
}

fn parse_ts_cell(row: u64, cell: &str) -> Result<NaiveDateTime, IngestError> {
    parse_timestamp(cell).ok_or_else(|| IngestError::UnparseableTimestamp {
        row,
        value: cell.to_string(),
    })
}

/// Zone ids in order of first appearance.
fn zone_order(records: &[OccupancyRecord]) -> BTreeMap<String, usize> {
    let mut order = BTreeMap::new();
    for r in records {
        let next = order.len();
        order.entry(r.zone_id.clone()).or_insert(next);
    }
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularizeOptions {
    pub grid_step_minutes: u32,
    /// Value carried by grid points before a zone's first record.
    pub initial_value: u32,
    /// Record gaps longer than this mark the days they fully enclose as
    /// sensor outages. `None` disables the check.
    pub gap_threshold_minutes: Option<u32>,
}

impl Default for RegularizeOptions {
    fn default() -> Self {
        Self {
            grid_step_minutes: 1,
            initial_value: 0,
            gap_threshold_minutes: Some(MINUTES_PER_DAY),
        }
    }
}

/// A run of contiguous grid points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: NaiveDateTime,
    pub values: Vec<u32>,
}

impl Segment {
    fn instant(&self, i: usize, step: u32) -> NaiveDateTime {
        self.start + Duration::minutes(i as i64 * step as i64)
    }
}

/// One zone's occupancy on a uniform grid, possibly with holes (removed
/// weekends or outage days) between segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneSeries {
    pub zone_id: String,
    pub grid_step_minutes: u32,
    pub segments: Vec<Segment>,
    /// Days dropped because a record gap fully enclosed them.
    pub outage_days: Vec<NaiveDate>,
}

impl ZoneSeries {
    /// A gap-free series starting at `start`.
    pub fn contiguous(zone_id: impl Into<String>, grid_step_minutes: u32, start: NaiveDateTime, values: Vec<u32>) -> Self {
        Self {
            zone_id: zone_id.into(),
            grid_step_minutes,
            segments: vec![Segment { start, values }],
            outage_days: Vec::new(),
        }
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(instant, value)` for every grid point in time order.
    pub fn points(&self) -> impl Iterator<Item = (NaiveDateTime, u32)> + '_ {
        let step = self.grid_step_minutes;
        self.segments
            .iter()
            .flat_map(move |s| s.values.iter().enumerate().map(move |(i, &v)| (s.instant(i, step), v)))
    }
}

fn midnight(date: NaiveDate) -> NaiveDateTime {
    date.and_time(NaiveTime::MIN)
}

fn check_step(step: u32) -> Result<(), IngestError> {
    if step == 0 || !MINUTES_PER_DAY.is_multiple_of(step) {
        return Err(IngestError::InvalidGridStep(step));
    }
    Ok(())
}

/// Forward-fills each zone's records onto a grid of `grid_step_minutes`.
///
/// A zone's grid runs from midnight of its first record's day to the
/// midnight following its last record. Every grid point takes the value of
/// the latest record at or before it; points before the first record take
/// `initial_value`.
pub fn regularize(records: &[OccupancyRecord], options: &RegularizeOptions) -> Result<Vec<ZoneSeries>, IngestError> {
    check_step(options.grid_step_minutes)?;
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let order = zone_order(records);
    let mut by_zone: Vec<(String, Vec<&OccupancyRecord>)> = vec![(String::new(), Vec::new()); order.len()];
    for r in records {
        let slot = &mut by_zone[order[&r.zone_id]];
        slot.0.clone_from(&r.zone_id);
        slot.1.push(r);
    }
    Ok(by_zone
        .into_iter()
        .map(|(zone, mut recs)| {
            recs.sort_by_key(|r| r.timestamp);
            regularize_zone(zone, &recs, options)
        })
        .collect())
}

fn regularize_zone(zone_id: String, recs: &[&OccupancyRecord], options: &RegularizeOptions) -> ZoneSeries {
    let step = options.grid_step_minutes;
    let first_day = recs[0].timestamp.date();
    let last_day = recs[recs.len() - 1].timestamp.date();
    let start = midnight(first_day);
    let n_days = (last_day - first_day).num_days() as usize + 1;
    let n_points = n_days * (MINUTES_PER_DAY / step) as usize;

    let mut values = Vec::with_capacity(n_points);
    let mut current = options.initial_value;
    let mut next = 0;
    for k in 0..n_points {
        let t = start + Duration::minutes(k as i64 * step as i64);
        while next < recs.len() && recs[next].timestamp <= t {
            current = recs[next].value;
            next += 1;
        }
        values.push(current);
    }

    let mut outage_days = Vec::new();
    if let Some(threshold) = options.gap_threshold_minutes {
        for w in recs.windows(2) {
            let (a, b) = (w[0].timestamp, w[1].timestamp);
            if b - a <= Duration::minutes(threshold as i64) {
                continue;
            }
            let mut day = a.date();
            while midnight(day) <= a {
                day = day.succ_opt().expect("date in range");
            }
            while midnight(day) + Duration::days(1) <= b {
                outage_days.push(day);
                day = day.succ_opt().expect("date in range");
            }
        }
        outage_days.dedup();
    }

    let points_per_day = (MINUTES_PER_DAY / step) as usize;
    let mut segments = Vec::new();
    let mut open: Option<Segment> = None;
    for (d, chunk) in values.chunks(points_per_day).enumerate() {
        let date = first_day + Duration::days(d as i64);
        if outage_days.binary_search(&date).is_ok() {
            segments.extend(open.take());
            continue;
        }
        open.get_or_insert_with(|| Segment {
            start: midnight(date),
            values: Vec::new(),
        })
        .values
        .extend_from_slice(chunk);
    }
    segments.extend(open);

    ZoneSeries {
        zone_id,
        grid_step_minutes: step,
        segments,
        outage_days,
    }
}

fn is_weekend(t: NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Drops every grid point falling on a Saturday or Sunday.
pub fn filter_weekdays(series: &ZoneSeries) -> ZoneSeries {
    let step = series.grid_step_minutes;
    let mut segments = Vec::new();
    for seg in &series.segments {
        let mut open: Option<Segment> = None;
        for (i, &v) in seg.values.iter().enumerate() {
            let t = seg.instant(i, step);
            if is_weekend(t) {
                segments.extend(open.take());
            } else {
                open.get_or_insert_with(|| Segment {
                    start: t,
                    values: Vec::new(),
                })
                .values
                .push(v);
            }
        }
        segments.extend(open);
    }
    ZoneSeries {
        zone_id: series.zone_id.clone(),
        grid_step_minutes: step,
        segments,
        outage_days: series.outage_days.clone(),
    }
}

/// One zone's occupancy over one calendar day, midnight to midnight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayTrace {
    pub date: NaiveDate,
    pub zone_id: String,
    pub step_minutes: u32,
    pub values: Vec<u32>,
}

impl DayTrace {
    /// A one-minute trace. Panics unless `values` has 1440 entries.
    pub fn new(date: NaiveDate, zone_id: impl Into<String>, values: Vec<u32>) -> Self {
        assert_eq!(values.len(), MINUTES_PER_DAY as usize, "a one-minute day has 1440 values");
        Self {
            date,
            zone_id: zone_id.into(),
            step_minutes: 1,
            values,
        }
    }

    pub fn max_value(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDay {
    pub date: NaiveDate,
    pub points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySplit {
    pub days: Vec<DayTrace>,
    pub partial_days: Vec<PartialDay>,
}

/// Cuts a series into complete calendar days. Incomplete days are dropped
/// and reported in [`DaySplit::partial_days`].
pub fn split_days(series: &ZoneSeries) -> DaySplit {
    let step = series.grid_step_minutes;
    let per_day = (MINUTES_PER_DAY / step.max(1)) as usize;
    let mut split = DaySplit::default();
    let flush = |date: NaiveDate, first: NaiveDateTime, values: Vec<u32>, split: &mut DaySplit| {
        if values.len() == per_day && first == midnight(date) {
            split.days.push(DayTrace {
                date,
                zone_id: series.zone_id.clone(),
                step_minutes: step,
                values,
            });
        } else if !values.is_empty() {
            split.partial_days.push(PartialDay {
                date,
                points: values.len(),
            });
        }
    };
    for seg in &series.segments {
        let mut current: Option<(NaiveDate, NaiveDateTime, Vec<u32>)> = None;
        for (i, &v) in seg.values.iter().enumerate() {
            let t = seg.instant(i, step);
            match &mut current {
                Some((date, _, values)) if *date == t.date() => values.push(v),
                _ => {
                    if let Some((date, first, values)) = current.take() {
                        flush(date, first, values, &mut split);
                    }
                    current = Some((t.date(), t, vec![v]));
                }
            }
        }
        if let Some((date, first, values)) = current {
            flush(date, first, values, &mut split);
        }
    }
    split
}

/// Per-zone summary of an ingest run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneDiagnostics {
    pub zone_id: String,
    pub days: usize,
    pub partial_days: Vec<PartialDay>,
    pub outage_days: Vec<NaiveDate>,
    pub max_value: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub records: usize,
    pub zones: Vec<ZoneDiagnostics>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub traces: Vec<DayTrace>,
    pub diagnostics: IngestDiagnostics,
}

/// Parse, regularize, keep weekdays and split into days, for every zone.
pub fn ingest<R: Read>(source: R, format: CsvFormat, options: &RegularizeOptions) -> Result<IngestOutcome, IngestError> {
    let records = parse_records(source, format)?;
    let series = regularize(&records, options)?;
    let mut outcome = IngestOutcome {
        diagnostics: IngestDiagnostics {
            records: records.len(),
            zones: Vec::new(),
        },
        ..Default::default()
    };
    for s in &series {
        let split = split_days(&filter_weekdays(s));
        outcome.diagnostics.zones.push(ZoneDiagnostics {
            zone_id: s.zone_id.clone(),
            days: split.days.len(),
            partial_days: split.partial_days,
            outage_days: s.outage_days.clone(),
            max_value: split.days.iter().map(DayTrace::max_value).max().unwrap_or(0),
        });
        outcome.traces.extend(split.days);
    }
    Ok(outcome)
}

fn format_ts(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M").to_string()
}

/// Writes traces as `timestamp,zone,value`: the value at each midnight, then
/// one row per change.
pub fn write_event_csv<W: Write>(traces: &[DayTrace], sink: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "zone", "value"])?;
    for t in traces {
        let start = midnight(t.date);
        let mut prev = None;
        for (i, &v) in t.values.iter().enumerate() {
            if prev != Some(v) {
                let ts = start + Duration::minutes(i as i64 * t.step_minutes as i64);
                w.write_record([format_ts(ts), t.zone_id.clone(), v.to_string()])?;
                prev = Some(v);
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes traces as a wide table with one column per zone. Cells of zones
/// without a trace on that day are left empty. All traces must share a step.
pub fn write_wide_csv<W: Write>(traces: &[DayTrace], sink: W) -> Result<(), IngestError> {
    let mut zones: Vec<&str> = Vec::new();
    for t in traces {
        if !zones.contains(&t.zone_id.as_str()) {
            zones.push(&t.zone_id);
        }
    }
    let step = traces.first().map_or(1, |t| t.step_minutes);
    if traces.iter().any(|t| t.step_minutes != step) {
        return Err(IngestError::InvalidGridStep(step));
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<Option<&DayTrace>>> = BTreeMap::new();
    for t in traces {
        let col = zones.iter().position(|z| *z == t.zone_id).expect("zone listed");
        by_date.entry(t.date).or_insert_with(|| vec![None; zones.len()])[col] = Some(t);
    }
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["timestamp".to_string()];
    header.extend(zones.iter().map(|z| z.to_string()));
    w.write_record(&header)?;
    let per_day = (MINUTES_PER_DAY / step) as usize;
    for (date, cols) in &by_date {
        for i in 0..per_day {
            let ts = midnight(*date) + Duration::minutes(i as i64 * step as i64);
            let mut row = vec![format_ts(ts)];
            row.extend(cols.iter().map(|c| c.map_or(String::new(), |t| t.values[i].to_string())));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
