//! Replay of the self-supervised online loop.
//!
//! Trials arrive one at a time. The first ones are labeled by the oracle to
//! seed the reference dataset; afterwards each trial is classified against
//! the current model snapshot and only abstentions go to the oracle. Every
//! oracle answer joins the growing dataset, but the snapshot the classifier
//! queries is refreshed only at retrain boundaries.
//!
//! The classifier path never sees ground truth: [`run_with_oracle`] works on
//! [`Observation`]s and asks a [`LabelOracle`] for labels. [`run_online`]
//! wraps it with an exact oracle and attaches truth afterwards for scoring.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{check_l_value, Decision, KnnModel, Label, Metric, Sample, DEFAULT_K};
use crate::error::{Error, Result};
use crate::signal::{FeatureVector, ForceTrace, PreprocessConfig, Preprocessor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrial {
    pub id: String,
    pub trace: ForceTrace,
    pub truth: Label,
}

/// What the classifier side is allowed to see of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    pub features: FeatureVector,
}

/// Source of verified labels, indexed by position in the observed stream.
pub trait LabelOracle {
    fn verify(&mut self, position: usize) -> Label;
}

impl<F: FnMut(usize) -> Label> LabelOracle for F {
    fn verify(&mut self, position: usize) -> Label {
        self(position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub k: usize,
    pub metric: Metric,
    pub l_value: f64,
    pub retrain_interval: usize,
    pub seed_size: usize,
    pub seed_min_positive_fraction: f64,
    pub preprocess: PreprocessConfig,
    pub rng_seed: u64,
    pub n_runs: usize,
    /// When false every replicated run sees the stream in its given order.
    pub shuffle: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            metric: Metric::Cosine,
            l_value: 100.0,
            retrain_interval: 20,
            seed_size: 2 * DEFAULT_K,
            seed_min_positive_fraction: 0.5,
            preprocess: PreprocessConfig::default(),
            rng_seed: 0,
            n_runs: 30,
            shuffle: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return Err(Error::ZeroParameter("k"));
        }
        self.metric.validate()?;
        check_l_value(self.l_value)?;
        if self.retrain_interval == 0 {
            return Err(Error::ZeroParameter("retrain interval"));
        }
        if self.seed_size < self.k {
            return invalid(format!(
                "seed size {} must be at least k = {}",
                self.seed_size, self.k
            ));
        }
        if !(self.seed_min_positive_fraction > 0.0 && self.seed_min_positive_fraction <= 1.0) {
            return invalid(format!(
                "seed positive fraction {} outside (0, 1]",
                self.seed_min_positive_fraction
            ));
        }
        if self.n_runs == 0 {
            return Err(Error::ZeroParameter("number of runs"));
        }
        self.preprocess.validate()
    }

    /// Minimum number of positive seed samples.
    pub fn seed_positive_quota(&self) -> usize {
        // The epsilon keeps e.g. 10 * 0.3 from rounding up to 4.
        ((self.seed_size as f64 * self.seed_min_positive_fraction) - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Seed,
    Classified,
    Fallback,
}

/// Outcome of one trial as seen by the loop, before truth is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub position: usize,
    pub phase: Phase,
    pub decision: Decision,
    pub predicted: Label,
}

impl Step {
    pub fn verified(&self) -> bool {
        self.phase != Phase::Classified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub decision: Decision,
    pub verified: bool,
    pub predicted: Label,
    pub truth: Label,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: usize,
    pub rng_seed: u64,
    pub config: LoopConfig,
    pub final_dataset_size: usize,
    pub records: Vec<TrialRecord>,
}

impl RunReport {
    pub fn verification_count(&self) -> usize {
        self.records.iter().filter(|r| r.verified).count()
    }

    pub fn seed_count(&self) -> usize {
        self.records.iter().filter(|r| r.phase == Phase::Seed).count()
    }

    pub fn fallback_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Fallback)
            .count()
    }
}

/// Runs the loop over an observed stream, consulting `oracle` for seeds
/// and abstentions. Returns one step per consumed observation together
/// with the final dataset size.
pub fn run_with_oracle<O: LabelOracle + ?Sized>(
    stream: &[Observation],
    oracle: &mut O,
    cfg: &LoopConfig,
) -> Result<(Vec<Step>, usize)> {
    cfg.validate()?;
    if stream.len() <= cfg.seed_size {
        return Err(Error::StreamExhausted {
            consumed: stream.len(),
        });
    }

    let quota = cfg.seed_positive_quota();
    let mut dataset: Vec<Sample> = Vec::with_capacity(stream.len());
    let mut steps = Vec::with_capacity(stream.len());
    let mut positives = 0;
    let mut cursor = 0;

    while dataset.len() < cfg.seed_size || positives < quota {
        let Some(obs) = stream.get(cursor) else {
            return Err(Error::StreamExhausted { consumed: cursor });
        };
        let label = oracle.verify(cursor);
        if label == Label::Positive {
            positives += 1;
        }
        dataset.push(Sample {
            features: obs.features.clone(),
            label,
        });
        steps.push(Step {
            position: cursor,
            phase: Phase::Seed,
            decision: Decision::Uncertain,
            predicted: label,
        });
        cursor += 1;
    }

    let mut snapshot = KnnModel::new(dataset.clone(), cfg.k, cfg.metric, cfg.l_value)?;
    let mut processed = 0;
    for (position, obs) in stream.iter().enumerate().skip(cursor) {
        let decision = if snapshot.len() < cfg.k {
            Decision::Uncertain
        } else {
            snapshot.classify(&obs.features)?
        };
        let step = match decision.label() {
            Some(label) => Step {
                position,
                phase: Phase::Classified,
                decision,
                predicted: label,
            },
            None => {
                let label = oracle.verify(position);
                dataset.push(Sample {
                    features: obs.features.clone(),
                    label,
                });
                Step {
                    position,
                    phase: Phase::Fallback,
                    decision,
                    predicted: label,
                }
            }
        };
        steps.push(step);

        processed += 1;
        if processed % cfg.retrain_interval == 0 && dataset.len() != snapshot.len() {
            snapshot = KnnModel::new(dataset.clone(), cfg.k, cfg.metric, cfg.l_value)?;
        }
    }

    Ok((steps, dataset.len()))
}

/// Trials preprocessed once so that replicated runs only permute indices.
#[derive(Debug, Clone)]
pub struct PreparedTrials {
    observations: Vec<Observation>,
    truths: Vec<Label>,
}

impl PreparedTrials {
    pub fn new(trials: &[LabeledTrial], preprocess: &PreprocessConfig) -> Result<Self> {
        let pre = Preprocessor::new(*preprocess)?;
        let observations = trials
            .iter()
            .map(|t| {
                Ok(Observation {
                    id: t.id.clone(),
                    features: pre.apply(&t.trace)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            observations,
            truths: trials.iter().map(|t| t.truth).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Runs the loop over the trials visited in `order`.
    pub fn run(&self, order: &[usize], cfg: &LoopConfig, run: usize) -> Result<RunReport> {
        let has = |label| order.iter().any(|&i| self.truths[i] == label);
        if !has(Label::Positive) || !has(Label::Negative) {
            return Err(Error::InvalidConfig(
                "trial stream must contain both classes".into(),
            ));
        }
        let stream: Vec<Observation> = order
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        let truth_at = |position: usize| self.truths[order[position]];
        let mut oracle = truth_at;
        let (steps, final_dataset_size) = run_with_oracle(&stream, &mut oracle, cfg)?;

        let records = steps
            .into_iter()
            .map(|s| TrialRecord {
                trial_id: stream[s.position].id.clone(),
                decision: s.decision,
                verified: s.verified(),
                predicted: s.predicted,
                truth: truth_at(s.position),
                phase: s.phase,
            })
            .collect();
        Ok(RunReport {
            run,
            rng_seed: cfg.rng_seed,
            config: *cfg,
            final_dataset_size,
            records,
        })
    }

    pub fn run_replicated(&self, cfg: &LoopConfig) -> Result<Vec<RunReport>> {
        cfg.validate()?;
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|run| self.run(&self.order_for(cfg, run), cfg, run))
            .collect()
    }

    pub fn run_replicated_sequential(&self, cfg: &LoopConfig) -> Result<Vec<RunReport>> {
        cfg.validate()?;
        (0..cfg.n_runs)
            .map(|run| self.run(&self.order_for(cfg, run), cfg, run))
            .collect()
    }

    fn order_for(&self, cfg: &LoopConfig, run: usize) -> Vec<usize> {
        if cfg.shuffle {
            run_permutation(self.len(), cfg.rng_seed, run)
        } else {
            (0..self.len()).collect()
        }
    }
}

/// Deterministic visiting order for replicated run `run`: a ChaCha8 stream
/// keyed by the base seed, one stream per run.
pub fn run_permutation(n: usize, base_seed: u64, run: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Runs the loop once over `trials` in the given order.
pub fn run_online(trials: &[LabeledTrial], cfg: &LoopConfig) -> Result<RunReport> {
    cfg.validate()?;
    let prepared = PreparedTrials::new(trials, &cfg.preprocess)?;
    let order: Vec<usize> = (0..trials.len()).collect();
    prepared.run(&order, cfg, 0)
}

/// `cfg.n_runs` independent runs, run `i` over a shuffle derived from
/// `(cfg.rng_seed, i)`. Runs execute in parallel; results are in run order.
pub fn run_replicated(trials: &[LabeledTrial], cfg: &LoopConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    PreparedTrials::new(trials, &cfg.preprocess)?.run_replicated(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: usize, values: &[f64]) -> Observation {
        Observation {
            id: id.to_string(),
            features: FeatureVector::new(values.to_vec()).unwrap(),
        }
    }

    fn small_cfg() -> LoopConfig {
        LoopConfig {
            k: 3,
            seed_size: 4,
            retrain_interval: 2,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig::default().validate().is_ok());
        let bad = [
            LoopConfig {
                seed_size: 5,
                ..LoopConfig::default()
            },
            LoopConfig {
                l_value: 45.0,
                ..LoopConfig::default()
            },
            LoopConfig {
                retrain_interval: 0,
                ..LoopConfig::default()
            },
            LoopConfig {
                seed_min_positive_fraction: 0.0,
                ..LoopConfig::default()
            },
            LoopConfig {
                n_runs: 0,
                ..LoopConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn seed_quota_rounds_up() {
        let cfg = LoopConfig::default();
        assert_eq!(cfg.seed_positive_quota(), 11);
        let cfg = LoopConfig {
            seed_size: 11,
            ..cfg
        };
        assert_eq!(cfg.seed_positive_quota(), 6);
        let cfg = LoopConfig {
            k: 3,
            seed_size: 10,
            seed_min_positive_fraction: 0.3,
            ..cfg
        };
        assert_eq!(cfg.seed_positive_quota(), 3);
    }

    #[test]
    fn seeding_extends_until_positive_quota() {
        // Negatives first: the quota of 2 positives forces 6 seed trials.
        let truths = [
            Label::Negative,
            Label::Negative,
            Label::Negative,
            Label::Negative,
            Label::Positive,
            Label::Positive,
            Label::Negative,
        ];
        let stream: Vec<_> = (0..7).map(|i| obs(i, &[1.0, i as f64 + 1.0])).collect();
        let mut oracle = |p: usize| truths[p];
        let (steps, size) = run_with_oracle(&stream, &mut oracle, &small_cfg()).unwrap();
        let seeds = steps.iter().filter(|s| s.phase == Phase::Seed).count();
        assert_eq!(seeds, 6);
        assert_eq!(steps.len(), 7);
        assert!(size >= 6);
    }

    #[test]
    fn exhausted_seeding_is_an_error() {
        let stream: Vec<_> = (0..6).map(|i| obs(i, &[1.0, 2.0])).collect();
        let mut oracle = |_p: usize| Label::Negative;
        assert_eq!(
            run_with_oracle(&stream, &mut oracle, &small_cfg()).unwrap_err(),
            Error::StreamExhausted { consumed: 6 }
        );
        let mut oracle = |_p: usize| Label::Negative;
        assert_eq!(
            run_with_oracle(&stream[..4], &mut oracle, &small_cfg()).unwrap_err(),
            Error::StreamExhausted { consumed: 4 }
        );
    }

    #[test]
    fn snapshot_is_stale_between_retrains() {
        // Seed: 2 positives near the x-axis, 2 negatives near the y-axis.
        // Trials on the diagonal sit between the classes and abstain.
        let cfg = LoopConfig {
            k: 3,
            seed_size: 4,
            retrain_interval: 2,
            l_value: 100.0,
            ..LoopConfig::default()
        };
        let stream = vec![
            obs(0, &[1.0, 0.0]),
            obs(1, &[1.0, 0.1]),
            obs(2, &[0.0, 1.0]),
            obs(3, &[0.1, 1.0]),
            obs(4, &[1.0, 1.0]),
            obs(5, &[1.0, 1.0]),
            obs(6, &[1.0, 1.0]),
        ];
        let truths = [
            Label::Positive,
            Label::Positive,
            Label::Negative,
            Label::Negative,
            Label::Positive,
            Label::Positive,
            Label::Positive,
        ];
        let mut calls = Vec::new();
        let mut oracle = |p: usize| {
            calls.push(p);
            truths[p]
        };
        let (steps, size) = run_with_oracle(&stream, &mut oracle, &cfg).unwrap();
        let phases: Vec<_> = steps.iter().map(|s| s.phase).collect();
        // Trial 5 duplicates trial 4 but still abstains: the snapshot has not
        // been refreshed yet. After the refresh the two duplicates plus a
        // positive seed are the nearest three, so trial 6 is classified.
        assert_eq!(
            phases,
            vec![
                Phase::Seed,
                Phase::Seed,
                Phase::Seed,
                Phase::Seed,
                Phase::Fallback,
                Phase::Fallback,
                Phase::Classified,
            ]
        );
        assert_eq!(steps[6].predicted, Label::Positive);
        assert_eq!(size, 6);
        assert_eq!(calls, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn permutation_is_deterministic_and_complete() {
        let a = run_permutation(50, 7, 3);
        assert_eq!(a, run_permutation(50, 7, 3));
        assert_ne!(a, run_permutation(50, 7, 4));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
