//! Scoring of loop records: confusion counts, precision and recall,
//! sliding-window series, the cycle-time model and run-averaged summaries.
//!
//! Ratios with a zero denominator are `None`, never 0 or 1.

use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::online::{Phase, RunReport, TrialRecord};

pub const DEFAULT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    /// Only classifier decisions are scored; oracle-labeled trials are
    /// tallied as uncertain.
    ClassifierOnly,
    /// Final labels of all trials are scored, oracle answers included.
    EndToEnd,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub uncertain: usize,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_ + self.uncertain
    }

    pub fn precision(&self) -> Option<f64> {
        precision(self)
    }

    pub fn recall(&self) -> Option<f64> {
        recall(self)
    }
}

pub fn confusion(records: &[TrialRecord], mode: CountMode) -> Result<ConfusionCounts> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Ok(tally(records, mode))
}

fn tally(records: &[TrialRecord], mode: CountMode) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in records {
        match mode {
            CountMode::ClassifierOnly if r.phase != Phase::Classified => counts.uncertain += 1,
            _ => counts.add(r.predicted, r.truth),
        }
    }
    counts
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Option<f64> {
    ratio(c.tp, c.tp + c.fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    /// Index of the last record in the window.
    pub index: usize,
    pub precision: Option<f64>,
    pub uncertain_fraction: f64,
}

/// Precision (classifier decisions only) and verified share over every
/// window of `window` consecutive records. Empty when there are fewer
/// records than `window`.
pub fn sliding_window_series(records: &[TrialRecord], window: usize) -> Result<Vec<WindowPoint>> {
    if window == 0 {
        return Err(Error::ZeroParameter("window"));
    }
    if records.len() < window {
        return Ok(Vec::new());
    }

    #[derive(Default)]
    struct Running {
        tp: i64,
        fp: i64,
        verified: i64,
    }
    impl Running {
        fn update(&mut self, r: &TrialRecord, sign: i64) {
            if r.verified {
                self.verified += sign;
            }
            if r.phase == Phase::Classified && r.predicted == Label::Positive {
                if r.truth == Label::Positive {
                    self.tp += sign;
                } else {
                    self.fp += sign;
                }
            }
        }
    }

    let mut running = Running::default();
    let mut series = Vec::with_capacity(records.len() - window + 1);
    for (i, r) in records.iter().enumerate() {
        running.update(r, 1);
        if i >= window {
            running.update(&records[i - window], -1);
        }
        if i + 1 >= window {
            series.push(WindowPoint {
                index: i,
                precision: ratio(running.tp as usize, (running.tp + running.fp) as usize),
                uncertain_fraction: running.verified as f64 / window as f64,
            });
        }
    }
    Ok(series)
}

/// Per-trial duration: a full iteration when verification runs, shortened
/// by the verification step otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub iteration_cost: f64,
    pub verification_cost: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        Self {
            iteration_cost: 45.0,
            verification_cost: 5.0,
        }
    }
}

impl TimeModel {
    pub fn new(iteration_cost: f64, verification_cost: f64) -> Result<Self> {
        let tm = Self {
            iteration_cost,
            verification_cost,
        };
        tm.validate()?;
        Ok(tm)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.iteration_cost.is_finite()
            && self.verification_cost > 0.0
            && self.verification_cost <= self.iteration_cost;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "time model needs 0 < verification ({}) <= iteration ({})",
                self.verification_cost, self.iteration_cost
            )))
        }
    }

    pub fn trial_cost(&self, verified: bool) -> f64 {
        if verified {
            self.iteration_cost
        } else {
            self.iteration_cost - self.verification_cost
        }
    }

    /// Total for `trials` trials of which `verified` ran verification.
    /// Both may be fractional run means.
    pub fn total(&self, trials: f64, verified: f64) -> f64 {
        trials * self.iteration_cost - (trials - verified) * self.verification_cost
    }

    /// Time saved relative to verifying every trial.
    pub fn savings(&self, trials: f64, verified: f64) -> f64 {
        (trials - verified) * self.verification_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTime {
    pub total_seconds: f64,
    /// (index of last record in window, mean cost per trial in the window)
    pub series: Vec<(usize, f64)>,
}

pub fn cycle_time(records: &[TrialRecord], tm: &TimeModel, window: usize) -> Result<CycleTime> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if window == 0 {
        return Err(Error::ZeroParameter("window"));
    }
    tm.validate()?;
    let costs: Vec<f64> = records.iter().map(|r| tm.trial_cost(r.verified)).collect();
    let total_seconds = costs.iter().sum();
    // Costs take two values, so a running count of verified trials keeps
    // the window means exact.
    let mut verified_in_window = 0usize;
    let mut series = Vec::new();
    for (i, r) in records.iter().enumerate() {
        verified_in_window += r.verified as usize;
        if i >= window {
            verified_in_window -= records[i - window].verified as usize;
        }
        if i + 1 >= window {
            let w = window as f64;
            series.push((i, tm.total(w, verified_in_window as f64) / w));
        }
    }
    Ok(CycleTime {
        total_seconds,
        series,
    })
}

/// Run-averaged statistics for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub l_value: f64,
    pub runs: usize,
    pub samples: f64,
    pub dataset_size: f64,
    pub verifications: f64,
    /// Mean of per-run precisions over runs where it is defined.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Precision of the pooled (summed) counts.
    pub pooled_precision: Option<f64>,
    pub pooled_recall: Option<f64>,
    pub undefined_precision_runs: usize,
    pub undefined_recall_runs: usize,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
    pub uncertain: f64,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

pub fn summarize_runs(reports: &[RunReport]) -> Result<SummaryRow> {
    let first = reports.first().ok_or(Error::EmptyReports)?;
    let counts: Vec<ConfusionCounts> = reports
        .iter()
        .map(|r| tally(&r.records, CountMode::ClassifierOnly))
        .collect();
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(usize) -> usize| (0..reports.len()).map(f).sum::<usize>() as f64 / n;

    let (precision, undefined_precision_runs) = mean_defined(counts.iter().map(precision));
    let (recall, undefined_recall_runs) = mean_defined(counts.iter().map(recall));
    let pooled = counts.iter().fold(ConfusionCounts::default(), |acc, c| ConfusionCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        tn: acc.tn + c.tn,
        fn_: acc.fn_ + c.fn_,
        uncertain: acc.uncertain + c.uncertain,
    });

    Ok(SummaryRow {
        l_value: first.config.l_value,
        runs: reports.len(),
        samples: mean(&|i| reports[i].records.len()),
        dataset_size: mean(&|i| reports[i].final_dataset_size),
        verifications: mean(&|i| reports[i].verification_count()),
        precision,
        recall,
        pooled_precision: pooled.precision(),
        pooled_recall: pooled.recall(),
        undefined_precision_runs,
        undefined_recall_runs,
        tp: mean(&|i| counts[i].tp),
        fp: mean(&|i| counts[i].fp),
        tn: mean(&|i| counts[i].tn),
        fn_: mean(&|i| counts[i].fn_),
        uncertain: mean(&|i| counts[i].uncertain),
    })
}

/// Averages per-run sliding-window series point by point. All reports
/// must have the same record count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanWindowPoint {
    pub index: usize,
    pub precision: Option<f64>,
    pub uncertain_fraction: f64,
    pub cycle_time: f64,
}

pub fn mean_window_series(
    reports: &[RunReport],
    window: usize,
    tm: &TimeModel,
) -> Result<Vec<MeanWindowPoint>> {
    let first = reports.first().ok_or(Error::EmptyReports)?;
    let len = first.records.len();
    if let Some(bad) = reports.iter().find(|r| r.records.len() != len) {
        return Err(Error::InvalidConfig(format!(
            "run {} has {} records, run {} has {len}",
            bad.run,
            bad.records.len(),
            first.run
        )));
    }
    let per_run = reports
        .iter()
        .map(|r| {
            Ok((
                sliding_window_series(&r.records, window)?,
                cycle_time(&r.records, tm, window)?.series,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = per_run.first().map_or(0, |p| p.0.len());
    let n = reports.len() as f64;
    Ok((0..points)
        .map(|j| {
            let (precision, _) = mean_defined(per_run.iter().map(|p| p.0[j].precision));
            MeanWindowPoint {
                index: per_run[0].0[j].index,
                precision,
                uncertain_fraction: per_run.iter().map(|p| p.0[j].uncertain_fraction).sum::<f64>()
                    / n,
                cycle_time: per_run.iter().map(|p| p.1[j].1).sum::<f64>() / n,
            }
        })
        .collect())
}
