//! Inhomogeneous semi-Markov models of building occupancy.
//!
//! The crate learns, from time-stamped occupancy logs, a model in which each
//! half-hour slot of the day is a homogeneous continuous-time Markov chain,
//! generates synthetic days from it, and scores generated ensembles against
//! measurements with the normalized Jensen-Shannon distance (NJSD).
//!
//! The pieces, in pipeline order:
//!
//! - [`ingest`]: CSV parsing, forward fill onto a minute grid, weekday filter, day split.
//! - [`chain`]: count binning, sojourn extraction, per-slot estimation, conflict resolution.
//! - [`simulate`]: seeded, reproducible sampling of day ensembles.
//! - [`evaluate`]: daily occupancy profiles, duration distributions, NJSD reports.
//! - [`metrics`]: KL and Jensen-Shannon divergences, NJSD, histograms.
//! - [`archive`]: the JSON container for day traces.
//!
//! ```
//! use occupancy::chain::{learn_model, LearnOptions};
//! use occupancy::evaluate::evaluate_zone;
//! use occupancy::ingest::{ingest, CsvFormat, RegularizeOptions};
//! use occupancy::metrics::HistogramSpec;
//! use occupancy::simulate::{sample_ensemble, SimulationConfig};
//!
//! let csv = "timestamp,zone,value\n\
//!            2013-01-07 08:30,office,1\n2013-01-07 12:00,office,0\n\
//!            2013-01-07 13:00,office,1\n2013-01-07 17:15,office,0\n\
//!            2013-01-08 09:10,office,1\n2013-01-08 16:40,office,0\n";
//! let measured = ingest(csv.as_bytes(), CsvFormat::EventCsv, &RegularizeOptions::default())?.traces;
//! let model = learn_model(&measured, &LearnOptions::with_states(2))?;
//! let predicted = sample_ensemble(&model, &SimulationConfig::new(20, 42))?;
//! let report = evaluate_zone(&measured, &predicted, &model.binning, &HistogramSpec::default(), 0.15)?;
//! assert_eq!(report.timeseries_njsd.len(), 1440);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
// NaN must fail range checks, so `!(x >= 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod chain;
pub mod evaluate;
pub mod ingest;
pub mod metrics;
pub mod simulate;

pub use archive::TraceArchive;
pub use chain::{InhomogeneousModel, StateBinning};
pub use ingest::DayTrace;
pub use metrics::DiscreteDistribution;

/// Library version embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// The guide's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/chain.md")]
    mod chain {}
    #[doc = include_str!("../../../book/src/simulate.md")]
    mod simulate {}
    #[doc = include_str!("../../../book/src/evaluate.md")]
    mod evaluate {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../docs/formats.md")]
    mod formats {}
}
