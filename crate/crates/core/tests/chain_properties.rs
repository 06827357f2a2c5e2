#![allow(clippy::needless_range_loop)]

mod common;

use occupancy::chain::{
    censored_rate_mle, learn_model, InhomogeneousModel, LearnOptions, StateBinning, SLOTS_PER_DAY, SLOT_MINUTES,
};
use occupancy::simulate::{sample_ensemble, SimulationConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn binning_matches_greedy_oracle(
        masses in prop::collection::vec(prop_oneof![1 => Just(0.0), 5 => 0.001f64..1.0], 1..12),
        m in 1usize..8,
    ) {
        prop_assume!(m <= masses.len() && masses.iter().sum::<f64>() > 0.0);
        let b = StateBinning::from_masses(&masses, m).unwrap();
        prop_assert_eq!(b.bins(), common::oracle_greedy_bins(&masses, m));
        let c2s = b.count_to_state();
        prop_assert_eq!(c2s[0], 0);
        prop_assert!(c2s.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert_eq!(*c2s.last().unwrap(), m - 1);
        for s in 0..m {
            let rep = b.representative(s);
            prop_assert_eq!(b.state_of(rep), s);
        }
    }

    #[test]
    fn binning_into_every_count_is_identity(n in 1usize..10) {
        let masses = vec![1.0; n];
        prop_assert_eq!(StateBinning::from_masses(&masses, n).unwrap(), StateBinning::identity(n));
    }
}

#[test]
fn equal_masses_split_evenly() {
    let b = StateBinning::from_masses(&[0.25; 8], 4).unwrap();
    assert_eq!(b.bins(), vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
}

fn three_state_generator() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 1.0 / 40.0, 1.0 / 60.0],
        vec![1.0 / 50.0, 0.0, 1.0 / 50.0],
        vec![1.0 / 90.0, 1.0 / 45.0, 0.0],
    ]
}

fn learned_homogeneous(days: usize) -> (InhomogeneousModel, Vec<Vec<f64>>) {
    let q = three_state_generator();
    let truth = common::homogeneous_model(StateBinning::identity(3), vec![0.4, 0.3, 0.3], q.clone());
    let traces = sample_ensemble(&truth, &SimulationConfig::new(days, 21)).unwrap();
    (learn_model(&traces, &LearnOptions { smoothing: 0.0, ..LearnOptions::with_states(3) }).unwrap(), q)
}

#[test]
fn homogeneous_generator_is_recovered_in_every_slot() {
    // Spells shorter than a minute vanish on the grid, which biases rates
    // low by roughly rate/2 per minute (about 2% here); the rest is noise.
    let (model, q) = learned_homogeneous(4000);
    for slot in &model.slots {
        for y in 0..3 {
            let rate: f64 = q[y].iter().sum();
            let rel = (slot.holding_rate[y] - rate).abs() / rate;
            assert!(rel < 0.12, "slot {} state {y}: rate {} vs {rate}", slot.slot_index, slot.holding_rate[y]);
            for x in 0..3 {
                let p = if x == y { 0.0 } else { q[y][x] / rate };
                let got = slot.transition_matrix[y][x];
                assert!((got - p).abs() < 0.06, "slot {} P[{y}][{x}] = {got}, expected {p}", slot.slot_index);
            }
        }
    }
}

#[test]
fn learned_rows_are_stochastic_and_conflicts_resolved() {
    for (truth, m) in [(common::office_presence_model(), 2), (common::meeting_count_model(), 4)] {
        let traces = sample_ensemble(&truth, &SimulationConfig::new(60, 4)).unwrap();
        let model = learn_model(&traces, &LearnOptions::with_states(m)).unwrap();
        model.validate().unwrap();
        assert!(model.conflicts_resolved);
        assert_eq!(model.slots.len(), SLOTS_PER_DAY);
        for slot in &model.slots {
            for row in &slot.transition_matrix {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            assert!(slot.holding_rate.iter().all(|&r| r >= 0.0 && r.is_finite()));
        }
        // Any state that can be occupied when a slot starts is supported
        // there once remapped.
        for (k, slot) in model.slots.iter().enumerate() {
            let reachable: Vec<bool> = if k == 0 {
                model.initial_distribution.iter().map(|&p| p > 0.0).collect()
            } else {
                let prev = &model.slots[k - 1];
                (0..m)
                    .map(|x| prev.support_mask[x] || (0..m).any(|y| prev.support_mask[y] && prev.transition_matrix[y][x] > 0.0))
                    .collect()
            };
            for s in (0..m).filter(|&s| reachable[s]) {
                assert!(slot.support_mask[slot.entry_remap[s]], "slot {k} state {s}");
            }
        }
        assert!((model.initial_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn slot_rates_account_for_truncated_spells() {
    // A single slow state pair: most spells outlast the slot, so ignoring
    // censoring would inflate the rate badly.
    let (up, down) = (1.0 / 90.0, 1.0 / 60.0);
    let truth = common::homogeneous_model(
        StateBinning::identity(2),
        vec![0.6, 0.4],
        vec![vec![0.0, up], vec![down, 0.0]],
    );
    let traces = sample_ensemble(&truth, &SimulationConfig::new(1500, 8)).unwrap();
    let model = learn_model(&traces, &LearnOptions::with_states(2)).unwrap();
    let mean = |s: usize| model.slots.iter().map(|slot| slot.holding_rate[s]).sum::<f64>() / SLOTS_PER_DAY as f64;
    assert!((mean(0) - up).abs() / up < 0.05, "{} vs {up}", mean(0));
    assert!((mean(1) - down).abs() / down < 0.05, "{} vs {down}", mean(1));
}

#[test]
fn censored_estimator_ignores_time_without_exits() {
    assert_eq!(censored_rate_mle([(10.0, true), (20.0, true), (30.0, true)]), Some(0.05));
    assert_eq!(censored_rate_mle([(10.0, true), (30.0, false)]), Some(1.0 / 40.0));
    assert_eq!(censored_rate_mle([(f64::from(SLOT_MINUTES), false)]), Some(0.0));
    assert_eq!(censored_rate_mle(std::iter::empty()), None);
}
