//! Ground-truth models and independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use occupancy::chain::{
    resolve_conflicts, InhomogeneousModel, SlotModel, StateBinning, TrainingMetadata, MODEL_SCHEMA_VERSION, SLOTS_PER_DAY,
    SLOT_MINUTES,
};

/// Hour of day at the start of slot `k`.
pub fn slot_hour(k: usize) -> f64 {
    k as f64 * f64::from(SLOT_MINUTES) / 60.0
}

fn metadata() -> TrainingMetadata {
    TrainingMetadata {
        n_days: 0,
        first_date: None,
        last_date: None,
        smoothing: 0.0,
        step_minutes: 1,
        library_version: occupancy::VERSION.into(),
        fallback_rows: vec![],
        remaps: vec![],
        config: serde_json::Value::Null,
    }
}

/// Assembles a resolved model from per-slot generators given as rate
/// matrices `q[y][x]` (off-diagonal entries only).
pub fn model_from_generators(zone: &str, binning: StateBinning, initial: Vec<f64>, generators: Vec<Vec<Vec<f64>>>) -> InhomogeneousModel {
    let n = binning.n_states();
    let slots = generators
        .into_iter()
        .enumerate()
        .map(|(k, q)| {
            let mut transition_matrix = vec![vec![0.0; n]; n];
            let mut holding_rate = vec![0.0; n];
            for y in 0..n {
                let out: f64 = (0..n).filter(|&x| x != y).map(|x| q[y][x]).sum();
                if out > 0.0 {
                    holding_rate[y] = out;
                    for x in (0..n).filter(|&x| x != y) {
                        transition_matrix[y][x] = q[y][x] / out;
                    }
                } else {
                    transition_matrix[y][y] = 1.0;
                }
            }
            SlotModel {
                slot_index: k,
                transition_matrix,
                holding_rate,
                support_mask: vec![true; n],
                entry_remap: (0..n).collect(),
            }
        })
        .collect::<Vec<_>>();
    assert_eq!(slots.len(), SLOTS_PER_DAY);
    resolve_conflicts(InhomogeneousModel {
        schema_version: MODEL_SCHEMA_VERSION,
        zone_id: zone.into(),
        binning,
        slot_minutes: SLOT_MINUTES,
        initial_distribution: initial,
        conflicts_resolved: false,
        slots,
        metadata: metadata(),
    })
    .expect("ground truth resolves")
}

/// Arrival and departure rates (per minute) of a single-occupant office.
pub fn office_presence_rates(k: usize) -> (f64, f64) {
    let h = slot_hour(k);
    match h {
        h if h < 8.0 => (0.0, 1.0 / 5.0),
        h if h < 8.5 => (1.0 / 8.0, 1.0 / 200.0),
        h if h < 12.0 => (1.0 / 15.0, 1.0 / 90.0),
        h if h < 12.5 => (1.0 / 60.0, 1.0 / 10.0),
        h if h < 13.0 => (1.0 / 10.0, 1.0 / 100.0),
        h if h < 17.0 => (1.0 / 15.0, 1.0 / 90.0),
        h if h < 17.5 => (0.0, 1.0 / 8.0),
        // A cleaner passes through now and then.
        h if (19.0..20.0).contains(&h) => (1.0 / 600.0, 1.0 / 8.0),
        _ => (0.0, 1.0 / 5.0),
    }
}

/// Two-state office: nearly always vacant at night, an arrival shortly
/// after eight, short breaks, a lunch dip and a departure soon after five.
pub fn office_presence_model() -> InhomogeneousModel {
    let generators = (0..SLOTS_PER_DAY)
        .map(|k| {
            let (arrive, leave) = office_presence_rates(k);
            vec![vec![0.0, arrive], vec![leave, 0.0]]
        })
        .collect();
    model_from_generators("office", StateBinning::identity(2), vec![1.0, 0.0], generators)
}

/// Level rates of the meeting space in slot `k`: `up[l]` moves level `l` to
/// `l + 1`, `down[l]` moves level `l + 1` to `l` (per minute).
pub fn meeting_level_rates(k: usize) -> ([f64; 3], [f64; 3]) {
    let h = slot_hour(k);
    let solo = ([1.0 / 15.0, 0.0, 0.0], [1.0 / 60.0, 1.0 / 5.0, 1.0 / 5.0]);
    let meeting = ([1.0 / 5.0, 1.0 / 10.0, 1.0 / 60.0], [1.0 / 200.0, 1.0 / 150.0, 1.0 / 30.0]);
    let drain = ([0.0; 3], [1.0 / 5.0; 3]);
    match h {
        h if h < 8.0 => drain,
        h if h < 10.0 => solo,
        h if h < 11.5 => meeting,
        h if h < 12.0 => ([0.0; 3], [1.0 / 15.0; 3]),
        h if h < 13.0 => ([1.0 / 60.0, 0.0, 0.0], [1.0 / 10.0; 3]),
        h if h < 15.5 => solo,
        h if h < 16.5 => meeting,
        h if h < 17.5 => ([0.0; 3], [1.0 / 30.0, 1.0 / 10.0, 1.0 / 10.0]),
        _ => drain,
    }
}

/// Counts 0..=5 grouped as levels {0}, {1}, {2, 3}, {4, 5}.
pub const COUNT_LEVELS: [usize; 6] = [0, 1, 2, 2, 3, 3];
/// Rate of people shuffling within a level (2 <-> 3, 4 <-> 5).
pub const WITHIN_LEVEL_RATE: f64 = 1.0 / 8.0;

/// Six-count meeting space: solo work in the mornings and afternoons, two
/// meetings, lunch, and an empty room overnight. Occupancy moves between
/// four activity levels as a birth-death chain; inside the two upper levels
/// the count also drifts between its two members. Every count of a level
/// leaves the level at the same rate towards the same neighbours, so the
/// level process is itself a Markov chain.
pub fn meeting_count_model() -> InhomogeneousModel {
    let generators = (0..SLOTS_PER_DAY)
        .map(|k| {
            let (up, down) = meeting_level_rates(k);
            let mut q = vec![vec![0.0; 6]; 6];
            for c in 0..6usize {
                let level = COUNT_LEVELS[c];
                if level < 3 {
                    // Enter the next level at its lowest count.
                    let target = COUNT_LEVELS.iter().position(|&l| l == level + 1).unwrap();
                    q[c][target] += up[level];
                }
                if level > 0 {
                    // Enter the previous level at its highest count.
                    let target = COUNT_LEVELS.iter().rposition(|&l| l == level - 1).unwrap();
                    q[c][target] += down[level - 1];
                }
                for d in (0..6).filter(|&d| d != c && COUNT_LEVELS[d] == level) {
                    q[c][d] += WITHIN_LEVEL_RATE;
                }
            }
            q
        })
        .collect();
    model_from_generators(
        "meeting",
        StateBinning::identity(6),
        vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        generators,
    )
}

/// Time-homogeneous model with the same generator in every slot.
pub fn homogeneous_model(binning: StateBinning, initial: Vec<f64>, q: Vec<Vec<f64>>) -> InhomogeneousModel {
    model_from_generators("homogeneous", binning, initial, vec![q; SLOTS_PER_DAY])
}

// ---------------------------------------------------------------- oracles

/// `sum p ln(p / q)` by direct summation.
pub fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

pub fn oracle_js(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * oracle_kl(p, &m) + 0.5 * oracle_kl(q, &m)
}

pub fn oracle_njsd(p: &[f64], q: &[f64]) -> f64 {
    (oracle_js(p, q).max(0.0) / std::f64::consts::LN_2).sqrt()
}

/// Greedy equal-mass contiguous partition, re-derived independently: walk
/// counts upward, and close the current bin once its mass reaches an equal
/// share of the mass not yet assigned, unless only enough counts remain to
/// give each later bin one.
pub fn oracle_greedy_bins(masses: &[f64], m: usize) -> Vec<Vec<u32>> {
    let mut bins: Vec<Vec<u32>> = vec![Vec::new()];
    let mut unassigned: f64 = masses.iter().sum();
    let mut current = 0.0;
    for (c, &w) in masses.iter().enumerate() {
        bins.last_mut().unwrap().push(c as u32);
        current += w;
        let open_bins = m - (bins.len() - 1);
        let later_counts = masses.len() - 1 - c;
        if bins.len() < m && (current + 1e-12 >= unassigned / open_bins as f64 || later_counts + 1 == open_bins) {
            unassigned -= current;
            current = 0.0;
            bins.push(Vec::new());
        }
    }
    bins
}

/// Transient state distribution at every whole minute of the day, by RK4
/// integration of the forward equation `dp/dt = p Q_k` with `substeps` steps
/// per minute, applying entry remaps at slot boundaries.
pub fn oracle_transient(model: &InhomogeneousModel, initial: &[f64], substeps: usize) -> Vec<Vec<f64>> {
    let n = model.n_states();
    let generator = |k: usize| -> Vec<Vec<f64>> {
        let s = &model.slots[k];
        let mut q = vec![vec![0.0; n]; n];
        for y in 0..n {
            for x in 0..n {
                if x != y {
                    q[y][x] = s.holding_rate[y] * s.transition_matrix[y][x];
                }
            }
            q[y][y] = -(0..n).filter(|&x| x != y).map(|x| q[y][x]).sum::<f64>();
        }
        q
    };
    let deriv = |p: &[f64], q: &[Vec<f64>]| -> Vec<f64> {
        (0..n).map(|x| (0..n).map(|y| p[y] * q[y][x]).sum()).collect()
    };
    let remap = |p: Vec<f64>, k: usize| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (y, w) in p.into_iter().enumerate() {
            out[model.slots[k].entry_remap[y]] += w;
        }
        out
    };
    let h = 1.0 / substeps as f64;
    let mut p = remap(initial.to_vec(), 0);
    let mut out = Vec::with_capacity(1440);
    for minute in 0..1440usize {
        let k = minute / SLOT_MINUTES as usize;
        if minute > 0 && minute % SLOT_MINUTES as usize == 0 {
            p = remap(p, k);
        }
        out.push(p.clone());
        let q = generator(k);
        for _ in 0..substeps {
            let k1 = deriv(&p, &q);
            let p2: Vec<f64> = p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
            let k2 = deriv(&p2, &q);
            let p3: Vec<f64> = p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
            let k3 = deriv(&p3, &q);
            let p4: Vec<f64> = p.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
            let k4 = deriv(&p4, &q);
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    out
}

/// `P(a <= X < b)` for `X ~ Exp(rate)`, with the last bin open-ended.
pub fn oracle_exponential_bins(rate: f64, edges: &[f64]) -> Vec<f64> {
    let n = edges.len() - 1;
    (0..n)
        .map(|i| {
            let lo = (-rate * edges[i]).exp();
            let hi = if i + 1 == n { 0.0 } else { (-rate * edges[i + 1]).exp() };
            lo - hi
        })
        .collect()
}
