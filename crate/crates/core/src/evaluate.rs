//! Scoring generated ensembles against measured ones.
//!
//! Two statistics are compared with the normalized Jensen-Shannon distance:
//! the daily profile (for every minute of the day, the fraction of days in
//! each state) and the distribution of sojourn durations of each state.

use std::io::Write;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{binned_states, sojourns_of_states, StateBinning};
use crate::ingest::DayTrace;
use crate::metrics::{histogram, njsd, DiscreteDistribution, HistogramSpec, MetricsError};

/// Default pass bar on every NJSD statistic.
pub const DEFAULT_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluateError {
    #[error("no day traces supplied")]
    EmptyTraces,
    #[error("traces mix zones {0:?} and {1:?}")]
    MixedZones(String, String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("state {0} has no uncensored sojourns")]
    NoSojourns(usize),
    #[error("state {state} is outside 0..{n_states}")]
    InvalidState { state: usize, n_states: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Per-minute state distribution averaged over the days of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    pub zone_id: String,
    pub step_minutes: u32,
    pub n_days: usize,
    /// `per_minute_state_probs[t][s]`: fraction of days in state `s` at grid point `t`.
    pub per_minute_state_probs: Vec<Vec<f64>>,
}

impl OccupancyProfile {
    pub fn n_states(&self) -> usize {
        self.per_minute_state_probs.first().map_or(0, Vec::len)
    }

    /// Probability curve of one state across the day.
    pub fn state_curve(&self, state: usize) -> Vec<f64> {
        self.per_minute_state_probs.iter().map(|row| row[state]).collect()
    }
}

fn check_ensemble(traces: &[DayTrace]) -> Result<(), EvaluateError> {
    let first = traces.first().ok_or(EvaluateError::EmptyTraces)?;
    for t in traces {
        if t.zone_id != first.zone_id {
            return Err(EvaluateError::MixedZones(first.zone_id.clone(), t.zone_id.clone()));
        }
        if t.step_minutes != first.step_minutes || t.values.len() != first.values.len() {
            return Err(EvaluateError::ShapeMismatch(format!(
                "traces of {} x {} min and {} x {} min",
                first.values.len(),
                first.step_minutes,
                t.values.len(),
                t.step_minutes
            )));
        }
    }
    Ok(())
}

/// Fraction of days whose binned state at each grid point is each state.
pub fn occupancy_profile(traces: &[DayTrace], binning: &StateBinning) -> Result<OccupancyProfile, EvaluateError> {
    check_ensemble(traces)?;
    let n = binning.n_states();
    let points = traces[0].values.len();
    let mut counts = vec![vec![0u64; n]; points];
    for t in traces {
        for (row, &v) in counts.iter_mut().zip(&t.values) {
            row[binning.state_of(v)] += 1;
        }
    }
    let days = traces.len() as f64;
    Ok(OccupancyProfile {
        zone_id: traces[0].zone_id.clone(),
        step_minutes: traces[0].step_minutes,
        n_days: traces.len(),
        per_minute_state_probs: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / days).collect())
            .collect(),
    })
}

fn check_profiles(measured: &OccupancyProfile, predicted: &OccupancyProfile) -> Result<(), EvaluateError> {
    if measured.n_states() != predicted.n_states()
        || measured.per_minute_state_probs.len() != predicted.per_minute_state_probs.len()
        || measured.step_minutes != predicted.step_minutes
    {
        return Err(EvaluateError::ShapeMismatch(format!(
            "profiles of {}x{} and {}x{}",
            measured.per_minute_state_probs.len(),
            measured.n_states(),
            predicted.per_minute_state_probs.len(),
            predicted.n_states()
        )));
    }
    Ok(())
}

fn row_distribution(row: &[f64]) -> Result<DiscreteDistribution, EvaluateError> {
    Ok(DiscreteDistribution::from_masses(row.to_vec())?)
}

/// NJSD between the categorical state distributions at each grid point.
pub fn timeseries_njsd(measured: &OccupancyProfile, predicted: &OccupancyProfile) -> Result<Vec<f64>, EvaluateError> {
    check_profiles(measured, predicted)?;
    measured
        .per_minute_state_probs
        .iter()
        .zip(&predicted.per_minute_state_probs)
        .map(|(p, q)| Ok(njsd(&row_distribution(p)?, &row_distribution(q)?)?))
        .collect()
}

/// Per-state NJSD curves comparing the Bernoulli pair `(p_s, 1 - p_s)` at
/// each grid point. Indexed `[state][minute]`.
pub fn state_timeseries_njsd(measured: &OccupancyProfile, predicted: &OccupancyProfile) -> Result<Vec<Vec<f64>>, EvaluateError> {
    check_profiles(measured, predicted)?;
    let bernoulli = |p: f64| DiscreteDistribution::from_masses(vec![p, (1.0 - p).max(0.0)]);
    (0..measured.n_states())
        .map(|s| {
            measured
                .per_minute_state_probs
                .iter()
                .zip(&predicted.per_minute_state_probs)
                .map(|(p, q)| Ok(njsd(&bernoulli(p[s])?, &bernoulli(q[s])?)?))
                .collect()
        })
        .collect()
}

/// Uncensored sojourn durations (minutes) of `state`, pooled across days.
///
/// Days are ordered by date, and runs of calendar-adjacent days are joined so
/// that a spell crossing midnight (typically the overnight absence) counts as
/// one sojourn. Spells touching the first or last grid point of a run of
/// adjacent days are censored and left out.
pub fn sojourn_durations(traces: &[DayTrace], binning: &StateBinning, state: usize) -> Vec<f64> {
    let mut ordered: Vec<&DayTrace> = traces.iter().collect();
    ordered.sort_by(|a, b| (a.date, &a.values).cmp(&(b.date, &b.values)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < ordered.len() {
        let step = ordered[i].step_minutes;
        let mut states = binned_states(ordered[i], binning);
        let mut j = i + 1;
        while j < ordered.len()
            && ordered[j].date == ordered[j - 1].date + Duration::days(1)
            && ordered[j].step_minutes == step
        {
            states.extend(binned_states(ordered[j], binning));
            j += 1;
        }
        out.extend(
            sojourns_of_states(&states, step)
                .into_iter()
                .filter(|s| s.state == state && !s.is_censored())
                .map(|s| f64::from(s.duration_minutes)),
        );
        i = j;
    }
    out
}

/// Histogram of the uncensored sojourn durations of `state`.
pub fn duration_distribution(
    traces: &[DayTrace],
    binning: &StateBinning,
    state: usize,
    spec: &HistogramSpec,
) -> Result<DiscreteDistribution, EvaluateError> {
    if state >= binning.n_states() {
        return Err(EvaluateError::InvalidState {
            state,
            n_states: binning.n_states(),
        });
    }
    let samples = sojourn_durations(traces, binning, state);
    if samples.is_empty() {
        return Err(EvaluateError::NoSojourns(state));
    }
    Ok(histogram(&samples, spec)?)
}

/// Expresses both distributions over the union of their supports.
pub fn align_supports(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<(DiscreteDistribution, DiscreteDistribution), MetricsError> {
    let mut support: Vec<usize> = p.support().iter().chain(q.support()).copied().collect();
    support.sort_unstable();
    support.dedup();
    Ok((p.padded_to(&support)?, q.padded_to(&support)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// Per-minute categorical state distribution; `index` is the grid point.
    Timeseries,
    /// Sojourn duration distribution; `index` is the state.
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub statistic: Statistic,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationComparison {
    pub state: usize,
    pub measured_sojourns: usize,
    pub predicted_sojourns: usize,
    pub measured: Option<DiscreteDistribution>,
    pub predicted: Option<DiscreteDistribution>,
    /// `None` when neither ensemble has an uncensored sojourn of the state;
    /// `1.0` when only one of them does.
    pub njsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub zone_id: String,
    pub n_states: usize,
    pub step_minutes: u32,
    pub measured_days: usize,
    pub predicted_days: usize,
    pub pass_threshold: f64,
    pub histogram: HistogramSpec,
    /// Categorical NJSD at each grid point.
    pub timeseries_njsd: Vec<f64>,
    /// Per-state Bernoulli NJSD curves, `[state][minute]`.
    pub state_timeseries_njsd: Vec<Vec<f64>>,
    pub measured_profile: Vec<Vec<f64>>,
    pub predicted_profile: Vec<Vec<f64>>,
    pub durations: Vec<DurationComparison>,
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvaluationReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn max_timeseries_njsd(&self) -> f64 {
        self.timeseries_njsd.iter().copied().fold(0.0, f64::max)
    }

    pub fn duration_njsd(&self) -> Vec<Option<f64>> {
        self.durations.iter().map(|d| d.njsd).collect()
    }

    /// Every statistic strictly above `threshold`.
    pub fn flags_at(&self, threshold: f64) -> Vec<Flag> {
        let mut flags: Vec<Flag> = self
            .timeseries_njsd
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > threshold)
            .map(|(index, &value)| Flag {
                statistic: Statistic::Timeseries,
                index,
                value,
            })
            .collect();
        flags.extend(self.durations.iter().filter_map(|d| match d.njsd {
            Some(value) if value > threshold => Some(Flag {
                statistic: Statistic::Duration,
                index: d.state,
                value,
            }),
            _ => None,
        }));
        flags
    }

    /// Tidy `minute,statistic,value` rows for plotting. Duration rows use the
    /// lower bin edge as `minute`; per-state duration NJSD rows leave it empty.
    pub fn write_tidy_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["minute", "statistic", "value"])?;
        let minute = |t: usize| (t as u32 * self.step_minutes).to_string();
        for (t, v) in self.timeseries_njsd.iter().enumerate() {
            w.write_record([minute(t), "njsd".into(), v.to_string()])?;
        }
        for (s, curve) in self.state_timeseries_njsd.iter().enumerate() {
            for (t, v) in curve.iter().enumerate() {
                w.write_record([minute(t), format!("njsd_state_{s}"), v.to_string()])?;
            }
        }
        for (name, profile) in [("measured", &self.measured_profile), ("predicted", &self.predicted_profile)] {
            for s in 0..self.n_states {
                for (t, row) in profile.iter().enumerate() {
                    w.write_record([minute(t), format!("{name}_prob_state_{s}"), row[s].to_string()])?;
                }
            }
        }
        let edges = self.histogram.bin_edges();
        for d in &self.durations {
            for (name, dist) in [("measured", &d.measured), ("predicted", &d.predicted)] {
                if let Some(dist) = dist {
                    for (&bin, &p) in dist.support().iter().zip(dist.mass()) {
                        w.write_record([edges[bin].to_string(), format!("{name}_duration_state_{}", d.state), p.to_string()])?;
                    }
                }
            }
            if let Some(v) = d.njsd {
                w.write_record([String::new(), format!("duration_njsd_state_{}", d.state), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn compare_durations(
    measured: &[DayTrace],
    predicted: &[DayTrace],
    binning: &StateBinning,
    state: usize,
    spec: &HistogramSpec,
) -> Result<DurationComparison, EvaluateError> {
    let m_samples = sojourn_durations(measured, binning, state);
    let p_samples = sojourn_durations(predicted, binning, state);
    let hist = |s: &[f64]| -> Result<Option<DiscreteDistribution>, MetricsError> {
        if s.is_empty() {
            Ok(None)
        } else {
            histogram(s, spec).map(Some)
        }
    };
    let m = hist(&m_samples)?;
    let p = hist(&p_samples)?;
    let score = match (&m, &p) {
        (Some(m), Some(p)) => {
            let (m, p) = align_supports(m, p)?;
            Some(njsd(&m, &p)?)
        }
        (None, None) => None,
        _ => Some(1.0),
    };
    Ok(DurationComparison {
        state,
        measured_sojourns: m_samples.len(),
        predicted_sojourns: p_samples.len(),
        measured: m,
        predicted: p,
        njsd: score,
    })
}

/// Full comparison of a predicted ensemble against a measured one.
pub fn evaluate_zone(
    measured: &[DayTrace],
    predicted: &[DayTrace],
    binning: &StateBinning,
    spec: &HistogramSpec,
    threshold: f64,
) -> Result<EvaluationReport, EvaluateError> {
    let mp = occupancy_profile(measured, binning)?;
    let pp = occupancy_profile(predicted, binning)?;
    if mp.zone_id != pp.zone_id {
        return Err(EvaluateError::MixedZones(mp.zone_id, pp.zone_id));
    }
    let timeseries = timeseries_njsd(&mp, &pp)?;
    let per_state = state_timeseries_njsd(&mp, &pp)?;
    let durations = (0..binning.n_states())
        .map(|s| compare_durations(measured, predicted, binning, s, spec))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = EvaluationReport {
        zone_id: mp.zone_id,
        n_states: binning.n_states(),
        step_minutes: mp.step_minutes,
        measured_days: mp.n_days,
        predicted_days: pp.n_days,
        pass_threshold: threshold,
        histogram: spec.clone(),
        timeseries_njsd: timeseries,
        state_timeseries_njsd: per_state,
        measured_profile: mp.per_minute_state_probs,
        predicted_profile: pp.per_minute_state_probs,
        durations,
        flags: Vec::new(),
        config: serde_json::Value::Null,
    };
    report.flags = report.flags_at(threshold);
    Ok(report)
}
