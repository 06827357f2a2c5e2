//! Distances between discrete probability distributions.
//!
//! Everything here works in nats. The Jensen-Shannon distance of two
//! distributions is bounded by `sqrt(ln 2)`, which is what [`njsd`] divides by
//! to land in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("distributions are defined over different supports")]
    SupportMismatch,
    #[error("q({label}) = 0 while p({label}) > 0")]
    AbsoluteContinuityViolation { label: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid histogram spec: {0}")]
    InvalidHistogramSpec(String),
    #[error("no samples to histogram")]
    EmptySamples,
    #[error("sample {value} lies outside the histogram range")]
    SampleOutOfRange { value: f64 },
}

/// A normalized probability mass function over a finite, labelled support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<usize>,
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates and wraps `mass` over `support`.
    pub fn new(support: Vec<usize>, mass: Vec<f64>) -> Result<Self, MetricsError> {
        if support.len() != mass.len() {
            return Err(MetricsError::InvalidDistribution(format!(
                "{} labels but {} masses",
                support.len(),
                mass.len()
            )));
        }
        if support.is_empty() {
            return Err(MetricsError::InvalidDistribution("empty support".into()));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(MetricsError::InvalidDistribution(
                "support labels are not unique".into(),
            ));
        }
        if let Some(bad) = mass.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(MetricsError::InvalidDistribution(format!(
                "mass {bad} is not a non-negative finite number"
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(MetricsError::InvalidDistribution(format!(
                "masses sum to {total}"
            )));
        }
        Ok(Self { support, mass })
    }

    /// Distribution over the labels `0..mass.len()`.
    pub fn from_masses(mass: Vec<f64>) -> Result<Self, MetricsError> {
        Self::new((0..mass.len()).collect(), mass)
    }

    /// Normalizes non-negative weights (e.g. counts) into a distribution over `0..n`.
    pub fn from_weights(weights: &[f64]) -> Result<Self, MetricsError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(MetricsError::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Self::from_masses(weights.iter().map(|w| w / total).collect())
    }

    /// The point mass on `label` within a support of `0..len`.
    pub fn point_mass(len: usize, label: usize) -> Result<Self, MetricsError> {
        let mut mass = vec![0.0; len];
        *mass.get_mut(label).ok_or_else(|| {
            MetricsError::InvalidDistribution(format!("label {label} outside 0..{len}"))
        })? = 1.0;
        Self::from_masses(mass)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Probability of `label`, zero when the label is outside the support.
    pub fn prob(&self, label: usize) -> f64 {
        self.support
            .iter()
            .position(|&l| l == label)
            .map_or(0.0, |i| self.mass[i])
    }

    /// Re-expresses the distribution over `support`, which must contain every
    /// label carrying positive mass. Missing labels get zero mass.
    pub fn padded_to(&self, support: &[usize]) -> Result<Self, MetricsError> {
        let covered: f64 = support.iter().map(|&l| self.prob(l)).sum();
        let lost = self
            .support
            .iter()
            .zip(&self.mass)
            .any(|(l, &m)| m > 0.0 && !support.contains(l));
        if lost || (covered - 1.0).abs() > MASS_TOLERANCE {
            return Err(MetricsError::SupportMismatch);
        }
        Self::new(support.to_vec(), support.iter().map(|&l| self.prob(l)).collect())
    }
}

fn check_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<(), MetricsError> {
    if p.support != q.support {
        return Err(MetricsError::SupportMismatch);
    }
    Ok(())
}

/// Kullback-Leibler divergence `KL(p, q)` in nats.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64, MetricsError> {
    check_support(p, q)?;
    let mut total = 0.0;
    for ((&label, &pm), &qm) in p.support.iter().zip(&p.mass).zip(&q.mass) {
        if pm == 0.0 {
            continue;
        }
        if qm == 0.0 {
            return Err(MetricsError::AbsoluteContinuityViolation { label });
        }
        total += pm * (pm / qm).ln();
    }
    // Gibbs: rounding can push an exact zero slightly negative.
    Ok(total.max(0.0))
}

/// Jensen-Shannon divergence in nats, in `[0, ln 2]`.
pub fn js_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64, MetricsError> {
    check_support(p, q)?;
    let mut total = 0.0;
    for (&pm, &qm) in p.mass.iter().zip(&q.mass) {
        let m = 0.5 * (pm + qm);
        if pm > 0.0 {
            total += pm * (pm / m).ln();
        }
        if qm > 0.0 {
            total += qm * (qm / m).ln();
        }
    }
    Ok((0.5 * total).clamp(0.0, std::f64::consts::LN_2))
}

/// Jensen-Shannon distance, the square root of [`js_divergence`].
pub fn js_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64, MetricsError> {
    js_divergence(p, q).map(f64::sqrt)
}

/// Normalized Jensen-Shannon distance: `js_distance / sqrt(ln 2)`, in `[0, 1]`.
pub fn njsd(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64, MetricsError> {
    // sqrt(D / ln 2) rather than sqrt(D) / sqrt(ln 2) keeps disjoint supports at exactly 1.
    js_divergence(p, q).map(|d| (d / std::f64::consts::LN_2).sqrt().min(1.0))
}

/// What to do with samples at or beyond the last bin edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowPolicy {
    #[default]
    ClampToLastBin,
    Error,
}

/// Bin edges (minutes) for duration histograms. Bins are left-closed and
/// right-open: bin `i` covers `[edges[i], edges[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    bin_edges: Vec<f64>,
    overflow_policy: OverflowPolicy,
}

impl HistogramSpec {
    pub fn new(bin_edges: Vec<f64>, overflow_policy: OverflowPolicy) -> Result<Self, MetricsError> {
        if bin_edges.len() < 2 {
            return Err(MetricsError::InvalidHistogramSpec(
                "need at least two edges".into(),
            ));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(MetricsError::InvalidHistogramSpec("non-finite edge".into()));
        }
        if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::InvalidHistogramSpec(
                "edges must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            bin_edges,
            overflow_policy,
        })
    }

    /// Equal-width bins `[start, start + width, ..., end]`.
    pub fn uniform(start: f64, end: f64, width: f64, overflow_policy: OverflowPolicy) -> Result<Self, MetricsError> {
        if !(width > 0.0) || !(end > start) {
            return Err(MetricsError::InvalidHistogramSpec(format!(
                "cannot tile [{start}, {end}] with width {width}"
            )));
        }
        let n = ((end - start) / width).ceil() as usize;
        let edges = (0..=n).map(|i| start + width * i as f64).collect();
        Self::new(edges, overflow_policy)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn overflow_policy(&self) -> OverflowPolicy {
        self.overflow_policy
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    /// Bin index for `value`, honouring the overflow policy.
    pub fn bin_of(&self, value: f64) -> Result<usize, MetricsError> {
        let first = self.bin_edges[0];
        let last = self.bin_edges[self.bin_edges.len() - 1];
        if !(value >= first) {
            return Err(MetricsError::SampleOutOfRange { value });
        }
        if value >= last {
            return match self.overflow_policy {
                OverflowPolicy::ClampToLastBin => Ok(self.n_bins() - 1),
                OverflowPolicy::Error => Err(MetricsError::SampleOutOfRange { value }),
            };
        }
        // Number of edges <= value, minus one.
        Ok(self.bin_edges.partition_point(|&e| e <= value) - 1)
    }
}

impl Default for HistogramSpec {
    /// Ten-minute bins over a full day, clamping longer spells into the last bin.
    fn default() -> Self {
        Self::uniform(0.0, 1440.0, 10.0, OverflowPolicy::ClampToLastBin)
            .expect("default histogram spec is valid")
    }
}

/// Normalized histogram of `samples` under `spec`, labelled by bin index.
pub fn histogram(samples: &[f64], spec: &HistogramSpec) -> Result<DiscreteDistribution, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut counts = vec![0u64; spec.n_bins()];
    for &s in samples {
        counts[spec.bin_of(s)?] += 1;
    }
    let n = samples.len() as f64;
    DiscreteDistribution::from_masses(counts.into_iter().map(|c| c as f64 / n).collect())
}
