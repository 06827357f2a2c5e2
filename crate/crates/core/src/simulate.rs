//! Sampling synthetic days from a learned [`InhomogeneousModel`].
//!
//! The process starts at midnight, holds each state for an exponential time
//! drawn from the current slot's rate and jumps according to the slot's jump
//! chain. When a holding time would cross a slot boundary the clock stops at
//! the boundary, the state is passed through the next slot's entry remap and a
//! fresh holding time is drawn from the new slot's rate. Exponential holding
//! times are memoryless, so this restart is exactly a piecewise-constant rate
//! process.
//!
//! # Random streams
//!
//! Day `i` of an ensemble with seed `s` is driven by
//! `ChaCha20Rng::seed_from_u64(s)` switched to stream `i`. Days are therefore
//! reproducible individually, independent of each other and of the order in
//! which they are computed.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{nearest_supported, InhomogeneousModel, SLOTS_PER_DAY, SLOT_MINUTES};
use crate::ingest::{DayTrace, MINUTES_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("model conflicts have not been resolved")]
    UnresolvedModel,
    #[error("initial state {0} is outside the model's states")]
    InvalidInitialState(usize),
    #[error("output step of {0} minutes does not divide a {SLOT_MINUTES}-minute slot")]
    InvalidOutputStep(u32),
    #[error("n_days must be at least 1")]
    NoDays,
    #[error("slot {0} supports no state")]
    NoSupportedStates(usize),
}

/// How the state at midnight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Drawn from the midnight state distribution of the training data.
    #[default]
    EmpiricalMidnight,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_days: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub output_step_minutes: u32,
    /// Date of the first generated day. Later days take the following
    /// weekdays, so consecutive generated days are calendar-adjacent except
    /// across weekends, as in weekday-filtered measurements.
    pub start_date: NaiveDate,
}

impl SimulationConfig {
    pub fn new(n_days: usize, seed: u64) -> Self {
        Self {
            n_days,
            seed,
            ..Self::default()
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_days: 1,
            seed: 0,
            initial_state: InitialState::default(),
            output_step_minutes: 1,
            start_date: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
        }
    }
}

/// State changes of one simulated day in continuous time (minutes).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(time, state)` pairs, starting with `(0.0, initial state)`. Times are
    /// strictly increasing except that a remap at a slot boundary is recorded
    /// at the boundary itself.
    pub events: Vec<(f64, usize)>,
}

impl Trajectory {
    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let i = self.events.partition_point(|&(time, _)| time <= t);
        self.events[i.saturating_sub(1)].1
    }

    /// Samples the state every `step` minutes, starting at minute 0.
    pub fn discretize(&self, step: u32) -> Vec<usize> {
        let n = (MINUTES_PER_DAY / step) as usize;
        let mut out = Vec::with_capacity(n);
        let mut i = 0;
        for k in 0..n {
            let t = (k as u32 * step) as f64;
            while i + 1 < self.events.len() && self.events[i + 1].0 <= t {
                i += 1;
            }
            out.push(self.events[i].1);
        }
        out
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (x, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = x;
        if u < acc {
            return x;
        }
    }
    last
}

fn initial_state<R: Rng + ?Sized>(model: &InhomogeneousModel, policy: InitialState, rng: &mut R) -> Result<usize, SimulateError> {
    let state = match policy {
        InitialState::EmpiricalMidnight => sample_row(&model.initial_distribution, rng),
        InitialState::Fixed(s) if s < model.n_states() => s,
        InitialState::Fixed(s) => return Err(SimulateError::InvalidInitialState(s)),
    };
    let first = &model.slots[0];
    if first.support_mask[state] {
        return Ok(first.entry_remap[state]);
    }
    nearest_supported(first, &model.binning, state).ok_or(SimulateError::NoSupportedStates(0))
}

/// Simulates one day of the semi-Markov process in continuous time.
pub fn sample_trajectory<R: Rng + ?Sized>(model: &InhomogeneousModel, initial: InitialState, rng: &mut R) -> Result<Trajectory, SimulateError> {
    if !model.conflicts_resolved {
        return Err(SimulateError::UnresolvedModel);
    }
    let mut state = initial_state(model, initial, rng)?;
    let mut events = vec![(0.0, state)];
    let mut t = 0.0;
    for (k, slot) in model.slots.iter().enumerate() {
        if k > 0 {
            let entered = slot.entry_remap[state];
            if entered != state {
                state = entered;
                events.push((t, state));
            }
        }
        let slot_end = f64::from((k as u32 + 1) * SLOT_MINUTES);
        loop {
            let rate = slot.holding_rate[state];
            if rate <= 0.0 {
                break;
            }
            let tau = Exp::new(rate).expect("positive rate").sample(rng);
            if t + tau >= slot_end {
                break;
            }
            t += tau;
            state = sample_row(&slot.transition_matrix[state], rng);
            events.push((t, state));
        }
        t = slot_end;
    }
    debug_assert_eq!(model.slots.len(), SLOTS_PER_DAY);
    Ok(Trajectory { events })
}

/// One synthetic day, reporting each state's representative count on the
/// output grid.
pub fn sample_day<R: Rng + ?Sized>(
    model: &InhomogeneousModel,
    initial: InitialState,
    output_step_minutes: u32,
    date: NaiveDate,
    rng: &mut R,
) -> Result<DayTrace, SimulateError> {
    if output_step_minutes == 0 || !SLOT_MINUTES.is_multiple_of(output_step_minutes) {
        return Err(SimulateError::InvalidOutputStep(output_step_minutes));
    }
    let trajectory = sample_trajectory(model, initial, rng)?;
    Ok(DayTrace {
        date,
        zone_id: model.zone_id.clone(),
        step_minutes: output_step_minutes,
        values: trajectory
            .discretize(output_step_minutes)
            .into_iter()
            .map(|s| model.binning.representative(s))
            .collect(),
    })
}

/// Generator for day `index` of an ensemble seeded with `seed`.
pub fn day_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The `index`-th weekday on or after `start`.
pub fn nth_weekday(start: NaiveDate, index: usize) -> NaiveDate {
    let mut date = start;
    while matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
        date += Duration::days(1);
    }
    let weeks = index / 5;
    let mut rest = index % 5;
    date += Duration::weeks(weeks as i64);
    while rest > 0 {
        date += Duration::days(1);
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            rest -= 1;
        }
    }
    date
}

/// `n_days` independent synthetic days, ordered by day index.
pub fn sample_ensemble(model: &InhomogeneousModel, config: &SimulationConfig) -> Result<Vec<DayTrace>, SimulateError> {
    if config.n_days == 0 {
        return Err(SimulateError::NoDays);
    }
    (0..config.n_days)
        .into_par_iter()
        .map(|i| {
            let mut rng = day_rng(config.seed, i as u64);
            sample_day(
                model,
                config.initial_state,
                config.output_step_minutes,
                nth_weekday(config.start_date, i),
                &mut rng,
            )
        })
        .collect()
}
