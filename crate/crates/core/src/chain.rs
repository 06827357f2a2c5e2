//! Learning the inhomogeneous continuous-time Markov chain.
//!
//! A day is cut into 48 half-hour slots. Within each slot the occupancy
//! process is a homogeneous CTMC described by a jump chain (where the process
//! goes next) and one exponential holding rate per state (how long it stays).
//! Stitching the 48 slot models together gives a clock-time dependent model
//! of the whole day.
//!
//! Raw counts `0..=N` are first grouped into `M` states of roughly equal
//! occurrence mass by [`StateBinning`]; binary presence data is the special
//! case `N = 1, M = 2`.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DayTrace, MINUTES_PER_DAY};

pub const SLOT_MINUTES: u32 = 30;
pub const SLOTS_PER_DAY: usize = (MINUTES_PER_DAY / SLOT_MINUTES) as usize;
pub const MODEL_SCHEMA_VERSION: u32 = 1;
/// Default number of states for counting models is `min(N + 1, DEFAULT_MAX_STATES)`.
pub const DEFAULT_MAX_STATES: usize = 8;
pub const DEFAULT_SMOOTHING: f64 = 0.5;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("no day traces supplied")]
    EmptyTraces,
    #[error("{states} states requested but counts only span 0..={max_count}")]
    TooFewCounts { states: usize, max_count: u32 },
    #[error("the number of states must be at least 1")]
    InvalidStateCount,
    #[error("traces mix zones {0:?} and {1:?}")]
    MixedZones(String, String),
    #[error("trace step of {0} minutes does not divide a {SLOT_MINUTES}-minute slot")]
    IncompatibleStep(u32),
    #[error("slot {0} supports no state")]
    NoSupportedStates(usize),
    #[error("smoothing must be a non-negative finite number, got {0}")]
    InvalidSmoothing(f64),
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Map between raw occupancy counts `0..=N` and model states `0..M`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateBinning {
    count_to_state: Vec<usize>,
    representative: Vec<u32>,
}

impl StateBinning {
    /// One state per count, `0..n_states`.
    pub fn identity(n_states: usize) -> Self {
        Self {
            count_to_state: (0..n_states).collect(),
            representative: (0..n_states as u32).collect(),
        }
    }

    /// Builds a binning from explicit parts, checking monotonicity and
    /// surjectivity.
    pub fn from_parts(count_to_state: Vec<usize>, representative: Vec<u32>) -> Result<Self, ChainError> {
        let b = Self {
            count_to_state,
            representative,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: &str| Err(ChainError::InvalidBinning(m.to_string()));
        if self.count_to_state.is_empty() || self.representative.is_empty() {
            return bad("empty binning");
        }
        if self.count_to_state[0] != 0 {
            return bad("count 0 must map to state 0");
        }
        for w in self.count_to_state.windows(2) {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return bad("states must be contiguous and non-decreasing in count");
            }
        }
        if self.count_to_state[self.count_to_state.len() - 1] + 1 != self.representative.len() {
            return bad("every state needs exactly one representative count");
        }
        for (s, &rep) in self.representative.iter().enumerate() {
            if self.count_to_state.get(rep as usize) != Some(&s) {
                return bad("representative count must lie inside its own bin");
            }
        }
        Ok(())
    }

    /// Greedy equal-mass partition of `masses[c]` (occurrence mass of count
    /// `c`) into `n_states` contiguous bins.
    ///
    /// Counts are taken in ascending order; a bin closes as soon as its mass
    /// reaches `remaining mass / remaining bins`, or when the counts left are
    /// just enough to give every remaining bin one count.
    pub fn from_masses(masses: &[f64], n_states: usize) -> Result<Self, ChainError> {
        if n_states == 0 {
            return Err(ChainError::InvalidStateCount);
        }
        if masses.is_empty() {
            return Err(ChainError::EmptyTraces);
        }
        let max_count = masses.len() as u32 - 1;
        if n_states > masses.len() {
            return Err(ChainError::TooFewCounts {
                states: n_states,
                max_count,
            });
        }
        let total: f64 = masses.iter().sum();
        let mut count_to_state = Vec::with_capacity(masses.len());
        let mut state = 0;
        let mut remaining = total;
        let mut acc = 0.0;
        for (c, &m) in masses.iter().enumerate() {
            count_to_state.push(state);
            acc += m;
            if state + 1 == n_states {
                continue;
            }
            let bins_left = n_states - state;
            let counts_after = masses.len() - c - 1;
            let target = remaining / bins_left as f64;
            if acc >= target - 1e-12 || counts_after == bins_left - 1 {
                remaining -= acc;
                acc = 0.0;
                state += 1;
            }
        }
        let representative = (0..n_states)
            .map(|s| weighted_lower_median(masses, &count_to_state, s))
            .collect();
        Ok(Self {
            count_to_state,
            representative,
        })
    }

    /// Number of model states `M`.
    pub fn n_states(&self) -> usize {
        self.representative.len()
    }

    /// Largest raw count `N` covered by the binning.
    pub fn max_count(&self) -> u32 {
        self.count_to_state.len() as u32 - 1
    }

    /// State of a raw count. Counts above `N` fall into the last state.
    pub fn state_of(&self, count: u32) -> usize {
        self.count_to_state
            .get(count as usize)
            .copied()
            .unwrap_or(self.n_states() - 1)
    }

    /// Count emitted when generating in `state`.
    pub fn representative(&self, state: usize) -> u32 {
        self.representative[state]
    }

    pub fn count_to_state(&self) -> &[usize] {
        &self.count_to_state
    }

    pub fn representatives(&self) -> &[u32] {
        &self.representative
    }

    /// Raw counts grouped by state.
    pub fn bins(&self) -> Vec<Vec<u32>> {
        let mut bins = vec![Vec::new(); self.n_states()];
        for (c, &s) in self.count_to_state.iter().enumerate() {
            bins[s].push(c as u32);
        }
        bins
    }
}

fn weighted_lower_median(masses: &[f64], count_to_state: &[usize], state: usize) -> u32 {
    let counts: Vec<usize> = (0..masses.len()).filter(|&c| count_to_state[c] == state).collect();
    let bin_mass: f64 = counts.iter().map(|&c| masses[c]).sum();
    if bin_mass <= 0.0 {
        return counts[(counts.len() - 1) / 2] as u32;
    }
    let mut acc = 0.0;
    for &c in &counts {
        acc += masses[c];
        if acc >= 0.5 * bin_mass {
            return c as u32;
        }
    }
    counts[counts.len() - 1] as u32
}

/// Fraction of grid points carrying each count `0..=N`, where `N` is the
/// largest observed count or `max_count` when that is larger.
pub fn count_masses(traces: &[DayTrace], max_count: Option<u32>) -> Result<Vec<f64>, ChainError> {
    if traces.is_empty() {
        return Err(ChainError::EmptyTraces);
    }
    let observed = traces.iter().map(DayTrace::max_value).max().unwrap_or(0);
    let n = observed.max(max_count.unwrap_or(0)) as usize;
    let mut counts = vec![0u64; n + 1];
    for t in traces {
        for &v in &t.values {
            counts[v as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ChainError::EmptyTraces);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Equal-occurrence binning of the counts seen in `traces` into `n_states` states.
pub fn build_state_binning(traces: &[DayTrace], n_states: usize) -> Result<StateBinning, ChainError> {
    build_state_binning_with_max(traces, n_states, None)
}

/// As [`build_state_binning`], with the count range extended to `max_count`
/// (e.g. `Some(1)` for presence data that never shows an occupant).
pub fn build_state_binning_with_max(traces: &[DayTrace], n_states: usize, max_count: Option<u32>) -> Result<StateBinning, ChainError> {
    if n_states == 0 {
        return Err(ChainError::InvalidStateCount);
    }
    StateBinning::from_masses(&count_masses(traces, max_count)?, n_states)
}

/// A maximal run of one state within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sojourn {
    pub state: usize,
    pub entry_minute: u32,
    pub duration_minutes: u32,
    /// The run starts at the first grid point of the observation window.
    pub censored_start: bool,
    /// The run reaches the end of the observation window; no exit was seen.
    pub censored_end: bool,
    /// State entered when the run ends, `None` when censored at the end.
    pub next_state: Option<usize>,
}

impl Sojourn {
    pub fn exit_minute(&self) -> u32 {
        self.entry_minute + self.duration_minutes
    }

    pub fn is_censored(&self) -> bool {
        self.censored_start || self.censored_end
    }
}

/// Binned state at each grid point of `trace`.
pub fn binned_states(trace: &DayTrace, binning: &StateBinning) -> Vec<usize> {
    trace.values.iter().map(|&v| binning.state_of(v)).collect()
}

/// Run-length decomposition of a sequence of states sampled every `step` minutes.
pub fn sojourns_of_states(states: &[usize], step: u32) -> Vec<Sojourn> {
    let mut out: Vec<Sojourn> = Vec::new();
    let mut start = 0;
    for i in 1..=states.len() {
        if i == states.len() || states[i] != states[start] {
            out.push(Sojourn {
                state: states[start],
                entry_minute: start as u32 * step,
                duration_minutes: (i - start) as u32 * step,
                censored_start: start == 0,
                censored_end: i == states.len(),
                next_state: states.get(i).copied(),
            });
            start = i;
        }
    }
    out
}

/// Maximal constant-state runs of a day after binning. Runs touching either
/// midnight are flagged censored.
pub fn extract_sojourns(trace: &DayTrace, binning: &StateBinning) -> Vec<Sojourn> {
    sojourns_of_states(&binned_states(trace, binning), trace.step_minutes)
}

/// Sufficient statistics of one slot: jump counts and time at risk per state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotStatistics {
    pub slot_index: usize,
    /// `jumps[y][x]`: observed jumps `y -> x` attributed to the slot.
    pub jumps: Vec<Vec<u64>>,
    /// Minutes spent in each state within the slot.
    pub exposure: Vec<f64>,
}

impl SlotStatistics {
    pub fn new(slot_index: usize, n_states: usize) -> Self {
        Self {
            slot_index,
            jumps: vec![vec![0; n_states]; n_states],
            exposure: vec![0.0; n_states],
        }
    }

    /// Adds the part of `sojourn` that overlaps this slot.
    ///
    /// A change first seen at grid point `e` happened somewhere in
    /// `(e - step, e]`, so the exit is attributed to the slot holding minute
    /// `e - 1`, where the state still has exposure.
    pub fn add(&mut self, sojourn: &Sojourn) {
        let lo = self.slot_index as u32 * SLOT_MINUTES;
        let hi = lo + SLOT_MINUTES;
        let (a, b) = (sojourn.entry_minute, sojourn.exit_minute());
        let overlap = b.min(hi).saturating_sub(a.max(lo));
        self.exposure[sojourn.state] += f64::from(overlap);
        if let (false, Some(next)) = (sojourn.censored_end, sojourn.next_state) {
            if (lo..hi).contains(&(b - 1)) {
                self.jumps[sojourn.state][next] += 1;
            }
        }
    }

    pub fn exits(&self, state: usize) -> u64 {
        self.jumps[state].iter().sum()
    }

    pub fn supported(&self, state: usize) -> bool {
        self.exposure[state] > 0.0
    }
}

/// Why a slot row fell back to holding the state until the slot ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackReason {
    /// The state never occurs in the slot.
    Unobserved,
    /// The state occurs but is never left within the slot.
    NoExits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRow {
    pub slot: usize,
    pub state: usize,
    pub reason: FallbackReason,
}

/// One homogeneous CTMC covering a half-hour slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotModel {
    pub slot_index: usize,
    /// Row-stochastic jump chain. Off-diagonal for states that are left within
    /// the slot; a unit diagonal marks a state held until the slot ends.
    pub transition_matrix: Vec<Vec<f64>>,
    /// Exit rate per state, in events per minute. Zero for held states.
    pub holding_rate: Vec<f64>,
    /// Whether each state occurs in this slot in the training data.
    pub support_mask: Vec<bool>,
    /// State actually entered when the process arrives in this slot in a given
    /// state. Identity for supported states.
    pub entry_remap: Vec<usize>,
}

impl SlotModel {
    pub fn n_states(&self) -> usize {
        self.holding_rate.len()
    }

    /// `true` when the state is held until the slot ends.
    pub fn is_absorbing(&self, state: usize) -> bool {
        self.holding_rate[state] == 0.0
    }

    pub fn supported_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.support_mask.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i)
    }

    /// States that can be occupied when the slot ends: the supported ones
    /// and any state a supported row jumps to.
    pub fn reachable_at_end(&self) -> Vec<bool> {
        let mut reach = self.support_mask.clone();
        for y in self.supported_states() {
            for (x, &p) in self.transition_matrix[y].iter().enumerate() {
                if p > 0.0 {
                    reach[x] = true;
                }
            }
        }
        reach
    }
}

/// Censoring-aware exponential rate estimate: exits per minute at risk.
///
/// Each observation is `(minutes spent, exited)`. Spells cut short by an
/// observation boundary contribute their time but no exit, which is the
/// maximum-likelihood estimator for right-censored exponential data.
pub fn censored_rate_mle<I>(observations: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    let (time, exits) = observations
        .into_iter()
        .fold((0.0, 0u64), |(t, e), (d, exited)| (t + d, e + u64::from(exited)));
    (time > 0.0).then(|| exits as f64 / time)
}

/// Fits a slot's CTMC from its sufficient statistics.
pub fn fit_slot(stats: &SlotStatistics, smoothing: f64) -> (SlotModel, Vec<FallbackRow>) {
    let n = stats.exposure.len();
    let support_mask: Vec<bool> = (0..n).map(|s| stats.supported(s)).collect();
    let mut transition_matrix = vec![vec![0.0; n]; n];
    let mut holding_rate = vec![0.0; n];
    let mut fallbacks = Vec::new();
    for y in 0..n {
        let exits = stats.exits(y);
        if !support_mask[y] || exits == 0 {
            transition_matrix[y][y] = 1.0;
            fallbacks.push(FallbackRow {
                slot: stats.slot_index,
                state: y,
                reason: if support_mask[y] {
                    FallbackReason::NoExits
                } else {
                    FallbackReason::Unobserved
                },
            });
            continue;
        }
        holding_rate[y] = exits as f64 / stats.exposure[y];
        // Observed destinations always count, even when the jump lands in
        // the slot's last minute and the destination has no exposure here.
        let row = &mut transition_matrix[y];
        for x in (0..n).filter(|&x| x != y) {
            let observed = stats.jumps[y][x] as f64;
            if support_mask[x] {
                row[x] = observed + smoothing;
            } else {
                row[x] = observed;
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    (
        SlotModel {
            slot_index: stats.slot_index,
            transition_matrix,
            holding_rate,
            support_mask,
            entry_remap: (0..n).collect(),
        },
        fallbacks,
    )
}

/// Learns the homogeneous CTMC of one slot from a day's (or several days')
/// sojourns over `n_states` states.
pub fn learn_slot_model(sojourns: &[Sojourn], slot_index: usize, n_states: usize, smoothing: f64) -> SlotModel {
    let mut stats = SlotStatistics::new(slot_index, n_states);
    sojourns.iter().for_each(|s| stats.add(s));
    fit_slot(&stats, smoothing).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Remap {
    pub slot: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_days: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub smoothing: f64,
    pub step_minutes: u32,
    pub library_version: String,
    pub fallback_rows: Vec<FallbackRow>,
    pub remaps: Vec<Remap>,
    /// Free-form provenance, e.g. the resolved command configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// The full-day model: 48 slot CTMCs plus the state binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousModel {
    pub schema_version: u32,
    pub zone_id: String,
    pub binning: StateBinning,
    pub slot_minutes: u32,
    /// Distribution of the state at midnight in the training data.
    pub initial_distribution: Vec<f64>,
    pub conflicts_resolved: bool,
    pub slots: Vec<SlotModel>,
    pub metadata: TrainingMetadata,
}

impl InhomogeneousModel {
    pub fn n_states(&self) -> usize {
        self.binning.n_states()
    }

    /// Checks shapes, stochasticity and rate signs.
    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: String| Err(ChainError::InvalidModel(m));
        self.binning.validate()?;
        let n = self.n_states();
        if self.slot_minutes != SLOT_MINUTES {
            return bad(format!("slot_minutes must be {SLOT_MINUTES}"));
        }
        if self.slots.len() != SLOTS_PER_DAY {
            return bad(format!("expected {SLOTS_PER_DAY} slots, found {}", self.slots.len()));
        }
        if self.initial_distribution.len() != n
            || self.initial_distribution.iter().any(|p| !(*p >= 0.0))
            || (self.initial_distribution.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE
        {
            return bad("initial_distribution is not a distribution over the states".into());
        }
        for (k, slot) in self.slots.iter().enumerate() {
            if slot.slot_index != k {
                return bad(format!("slot {k} carries index {}", slot.slot_index));
            }
            if slot.transition_matrix.len() != n
                || slot.holding_rate.len() != n
                || slot.support_mask.len() != n
                || slot.entry_remap.len() != n
            {
                return bad(format!("slot {k} has the wrong number of states"));
            }
            for (y, row) in slot.transition_matrix.iter().enumerate() {
                if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) {
                    return bad(format!("slot {k} row {y} is malformed"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
                    return bad(format!("slot {k} row {y} does not sum to 1"));
                }
            }
            if slot.holding_rate.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return bad(format!("slot {k} has a negative or non-finite rate"));
            }
            if slot.entry_remap.iter().any(|&s| s >= n) {
                return bad(format!("slot {k} remaps outside the state range"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Parses and validates a model document, rejecting other schema versions.
    pub fn from_json(text: &str) -> Result<Self, ModelFormatError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(ModelFormatError::Json)?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(MODEL_SCHEMA_VERSION) => {}
            Some(v) => return Err(ModelFormatError::SchemaVersion(v)),
            None => return Err(ModelFormatError::MissingField("schema_version")),
        }
        let model: Self = serde_json::from_value(raw).map_err(ModelFormatError::Json)?;
        model.validate().map_err(ModelFormatError::Invalid)?;
        Ok(model)
    }
}

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("model schema: {0}")]
    Json(serde_json::Error),
    #[error("model schema version {0} is not supported (expected {MODEL_SCHEMA_VERSION})")]
    SchemaVersion(u64),
    #[error("model schema: missing field `{0}`")]
    MissingField(&'static str),
    #[error(transparent)]
    Invalid(ChainError),
}

/// Learning options. `n_states = None` picks `min(N + 1, 8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub n_states: Option<usize>,
    pub smoothing: f64,
    pub max_count: Option<u32>,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            n_states: None,
            smoothing: DEFAULT_SMOOTHING,
            max_count: None,
        }
    }
}

impl LearnOptions {
    pub fn with_states(n_states: usize) -> Self {
        Self {
            n_states: Some(n_states),
            ..Self::default()
        }
    }
}

/// `min(N + 1, 8)` for a zone whose largest count is `max_count`.
pub fn default_state_count(max_count: u32) -> usize {
    (max_count as usize + 1).min(DEFAULT_MAX_STATES)
}

/// Learns a full-day model from weekday traces of one zone: bins the counts,
/// pools every day's sojourns per slot, fits the 48 slot chains and resolves
/// cross-slot conflicts.
pub fn learn_model(traces: &[DayTrace], options: &LearnOptions) -> Result<InhomogeneousModel, ChainError> {
    let first = traces.first().ok_or(ChainError::EmptyTraces)?;
    if let Some(other) = traces.iter().find(|t| t.zone_id != first.zone_id) {
        return Err(ChainError::MixedZones(first.zone_id.clone(), other.zone_id.clone()));
    }
    let step = first.step_minutes;
    if step == 0 || !SLOT_MINUTES.is_multiple_of(step) || traces.iter().any(|t| t.step_minutes != step) {
        return Err(ChainError::IncompatibleStep(step));
    }
    if !(options.smoothing >= 0.0) || !options.smoothing.is_finite() {
        return Err(ChainError::InvalidSmoothing(options.smoothing));
    }
    let masses = count_masses(traces, options.max_count)?;
    let n_states = options
        .n_states
        .unwrap_or_else(|| default_state_count(masses.len() as u32 - 1));
    let binning = StateBinning::from_masses(&masses, n_states)?;

    let mut stats: Vec<SlotStatistics> = (0..SLOTS_PER_DAY).map(|k| SlotStatistics::new(k, n_states)).collect();
    let mut midnight = vec![0.0; n_states];
    for trace in traces {
        let sojourns = extract_sojourns(trace, &binning);
        midnight[sojourns[0].state] += 1.0;
        for s in &sojourns {
            let first_slot = (s.entry_minute / SLOT_MINUTES) as usize;
            let last_slot = ((s.exit_minute() - 1) / SLOT_MINUTES) as usize;
            for slot in &mut stats[first_slot..=last_slot] {
                slot.add(s);
            }
        }
    }
    let days = traces.len() as f64;
    midnight.iter_mut().for_each(|p| *p /= days);

    let mut slots = Vec::with_capacity(SLOTS_PER_DAY);
    let mut fallback_rows = Vec::new();
    for s in &stats {
        let (slot, fallbacks) = fit_slot(s, options.smoothing);
        slots.push(slot);
        fallback_rows.extend(fallbacks);
    }

    let model = InhomogeneousModel {
        schema_version: MODEL_SCHEMA_VERSION,
        zone_id: first.zone_id.clone(),
        binning,
        slot_minutes: SLOT_MINUTES,
        initial_distribution: midnight,
        conflicts_resolved: false,
        slots,
        metadata: TrainingMetadata {
            n_days: traces.len(),
            first_date: traces.iter().map(|t| t.date).min(),
            last_date: traces.iter().map(|t| t.date).max(),
            smoothing: options.smoothing,
            step_minutes: step,
            library_version: crate::VERSION.to_string(),
            fallback_rows,
            remaps: Vec::new(),
            config: serde_json::Value::Null,
        },
    };
    let model = resolve_conflicts(model)?;
    model.validate()?;
    Ok(model)
}

/// Nearest supported state of `slot` to `state`, measured in representative
/// counts; ties go to the lower state.
pub fn nearest_supported(slot: &SlotModel, binning: &StateBinning, state: usize) -> Option<usize> {
    let target = i64::from(binning.representative(state));
    slot.supported_states()
        .min_by_key(|&s| ((i64::from(binning.representative(s)) - target).abs(), s))
}

/// Gives every state reachable at the end of slot `k` but unsupported in slot `k + 1` a
/// remap-on-entry rule to the nearest supported state of slot `k + 1`.
/// In slot 0 every unsupported state with midnight mass is remapped.
pub fn resolve_conflicts(mut model: InhomogeneousModel) -> Result<InhomogeneousModel, ChainError> {
    let n = model.n_states();
    let mut remaps = Vec::new();
    for k in 0..model.slots.len() {
        let slot = &model.slots[k];
        if !slot.support_mask.iter().any(|&s| s) {
            return Err(ChainError::NoSupportedStates(k));
        }
        let incoming: Vec<bool> = if k == 0 {
            model.initial_distribution.iter().map(|&p| p > 0.0).collect()
        } else {
            model.slots[k - 1].reachable_at_end()
        };
        let mut entry_remap: Vec<usize> = (0..n).collect();
        for s in (0..n).filter(|&s| incoming[s] && !slot.support_mask[s]) {
            let to = nearest_supported(slot, &model.binning, s).ok_or(ChainError::NoSupportedStates(k))?;
            entry_remap[s] = to;
            remaps.push(Remap { slot: k, from: s, to });
        }
        model.slots[k].entry_remap = entry_remap;
    }
    model.metadata.remaps = remaps;
    model.conflicts_resolved = true;
    Ok(model)
}
