//! Force-trace insertion classification.
//!
//! The pipeline smooths a raw z-axis force trace with a Savitzky-Golay
//! filter, reduces it by sliding-window means, and classifies it with a
//! k-nearest-neighbor vote that abstains unless a minimum share of the
//! neighbors agree (the l-value). Abstentions are resolved by an exact
//! label oracle whose answers grow the reference dataset over time.
//!
//! Modules:
//! - [`signal`]: smoothing and down-sampling.
//! - [`classifier`]: distances, neighbor search and the abstaining vote.
//! - [`online`]: the self-supervised replay loop and replicated runs.
//! - [`metrics`]: confusion counts, sliding windows, cycle time, summaries.
//! - [`datagen`]: synthetic two-class force profiles.

pub mod classifier;
pub mod datagen;
mod error;
pub mod metrics;
pub mod online;
pub mod signal;

pub use classifier::{Decision, KnnModel, Label, Metric};
pub use error::{Error, Result};
pub use online::{LabeledTrial, LoopConfig, RunReport, TrialRecord};
pub use signal::{FeatureVector, ForceTrace, PreprocessConfig};
