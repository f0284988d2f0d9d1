//! Parameter sweeps over k, metric, l-value and training size.
//!
//! Static mode repeats a shuffled train/validation/test split per seed,
//! trains on a fraction of the training pool and scores both held-out sets.
//! Online mode replays the self-supervised loop for every (k, metric,
//! l-value) cell. Cells that cannot hold k training samples are reported as
//! infeasible rows.

use std::io::Write;

use forcecheck_core::classifier::{decide, KnnModel, Label, Metric, Sample};
use forcecheck_core::metrics::summarize_runs;
use forcecheck_core::online::{run_permutation, LoopConfig, PreparedTrials};
use forcecheck_core::signal::PreprocessConfig;
use forcecheck_core::{Decision, LabeledTrial};
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::report::{csv_writer, fmt_opt, write_echo};

pub const GRID_COLUMNS: [&str; 12] = [
    "mode",
    "k",
    "metric",
    "l_value",
    "train_fraction",
    "precision",
    "recall",
    "uncertain_pct",
    "tp",
    "fp",
    "tn",
    "fn",
];

/// Held-out share of each of the validation and test sets (100 of 704).
pub const HOLDOUT_SHARE: f64 = 100.0 / 704.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Static,
    Online,
}

impl std::str::FromStr for GridMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "static" => Ok(GridMode::Static),
            "online" => Ok(GridMode::Online),
            other => Err(format!("unknown grid mode {other:?} (static or online)")),
        }
    }
}

impl std::fmt::Display for GridMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMode::Static => "static",
            GridMode::Online => "online",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub mode: GridMode,
    pub ks: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub l_values: Vec<f64>,
    pub train_fractions: Vec<f64>,
    /// Static mode: number of shuffled splits averaged per cell.
    pub seeds: usize,
    pub rng_seed: u64,
    /// Online mode settings; `seed_size` 0 means 2k per cell.
    pub runs: usize,
    pub retrain_interval: usize,
    pub seed_size: usize,
    pub preprocess: PreprocessConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            mode: GridMode::Static,
            ks: vec![5, 11, 15, 21, 25],
            metrics: Metric::ALL.to_vec(),
            l_values: vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
            train_fractions: vec![0.15, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0],
            seeds: 10,
            rng_seed: 0,
            runs: 30,
            retrain_interval: 20,
            seed_size: 0,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.ks.is_empty()
            || self.metrics.is_empty()
            || self.l_values.is_empty()
            || self.train_fractions.is_empty()
        {
            return usage("grid axes must be non-empty");
        }
        if self.ks.contains(&0) {
            return usage("k values must be positive");
        }
        if self.l_values.iter().any(|l| !(50.0..=100.0).contains(l)) {
            return usage("l-values must lie in [50, 100]");
        }
        if self.train_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return usage("training fractions must lie in (0, 1]");
        }
        if self.seeds == 0 || self.runs == 0 {
            return usage("seeds and runs must be positive");
        }
        for m in &self.metrics {
            m.validate()?;
        }
        self.preprocess.validate()?;
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| v.join(",");
        let mut e = vec![
            ("mode".to_string(), self.mode.to_string()),
            ("k".to_string(), list(self.ks.iter().map(|k| k.to_string()).collect())),
            ("metric".to_string(), list(self.metrics.iter().map(|m| m.to_string()).collect())),
            ("l-value".to_string(), list(self.l_values.iter().map(|l| l.to_string()).collect())),
            (
                "train-fractions".to_string(),
                list(self.train_fractions.iter().map(|f| f.to_string()).collect()),
            ),
            ("rng-seed".to_string(), self.rng_seed.to_string()),
        ];
        match self.mode {
            GridMode::Static => e.push(("seeds".to_string(), self.seeds.to_string())),
            GridMode::Online => {
                e.push(("runs".to_string(), self.runs.to_string()));
                e.push(("retrain-interval".to_string(), self.retrain_interval.to_string()));
                e.push(("seed-size".to_string(), self.seed_size.to_string()));
            }
        }
        e.extend([
            ("sg-window".to_string(), self.preprocess.sg_window.to_string()),
            ("sg-order".to_string(), self.preprocess.sg_order.to_string()),
            ("ds-window".to_string(), self.preprocess.ds_window.to_string()),
            ("ds-stride".to_string(), self.preprocess.ds_stride.to_string()),
        ]);
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub uncertain_pct: f64,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    /// `validation`, `test` or `online`.
    pub mode: &'static str,
    pub k: usize,
    pub metric: Metric,
    pub l_value: f64,
    pub train_fraction: f64,
    /// `None` for infeasible cells.
    pub stats: Option<CellStats>,
}

pub fn run_grid(trials: &[LabeledTrial], spec: &GridSpec) -> Result<Vec<GridRow>> {
    spec.validate()?;
    let prepared = PreparedTrials::new(trials, &spec.preprocess)?;
    let truths: Vec<Label> = trials.iter().map(|t| t.truth).collect();
    match spec.mode {
        GridMode::Static => run_static(&prepared, &truths, spec),
        GridMode::Online => run_online_cells(&prepared, spec),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    uncertain: usize,
}

impl Tally {
    fn add(&mut self, decision: Decision, truth: Label) {
        match (decision.label(), truth) {
            (None, _) => self.uncertain += 1,
            (Some(Label::Positive), Label::Positive) => self.tp += 1,
            (Some(Label::Positive), Label::Negative) => self.fp += 1,
            (Some(Label::Negative), Label::Negative) => self.tn += 1,
            (Some(Label::Negative), Label::Positive) => self.fn_ += 1,
        }
    }

    fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_ + self.uncertain
    }
}

/// Split sizes (train pool, validation, test) for `n` trials.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let holdout = (n as f64 * HOLDOUT_SHARE).round() as usize;
    let holdout = holdout.min(n / 3);
    (n - 2 * holdout, holdout, holdout)
}

fn train_size(pool: usize, fraction: f64) -> usize {
    ((pool as f64 * fraction).round() as usize).min(pool)
}

fn average(tallies: &[Tally]) -> CellStats {
    let n = tallies.len() as f64;
    let mean = |f: fn(&Tally) -> usize| tallies.iter().map(f).sum::<usize>() as f64 / n;
    let mean_defined = |f: fn(&Tally) -> Option<f64>| {
        let v: Vec<f64> = tallies.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    CellStats {
        precision: mean_defined(|t| {
            (t.tp + t.fp > 0).then(|| t.tp as f64 / (t.tp + t.fp) as f64)
        }),
        recall: mean_defined(|t| (t.tp + t.fn_ > 0).then(|| t.tp as f64 / (t.tp + t.fn_) as f64)),
        uncertain_pct: tallies
            .iter()
            .map(|t| 100.0 * t.uncertain as f64 / t.total().max(1) as f64)
            .sum::<f64>()
            / n,
        tp: mean(|t| t.tp),
        fp: mean(|t| t.fp),
        tn: mean(|t| t.tn),
        fn_: mean(|t| t.fn_),
    }
}

fn run_static(prepared: &PreparedTrials, truths: &[Label], spec: &GridSpec) -> Result<Vec<GridRow>> {
    let n = prepared.len();
    let (pool, n_val, n_test) = split_sizes(n);
    if n_val == 0 {
        return Err(CliError::Infeasible(format!(
            "{n} trials are too few for a validation/test split"
        )));
    }
    let obs = prepared.observations();

    // One job per (seed, fraction, metric); the nearest max-k neighbors
    // serve every smaller k and every l-value.
    let jobs: Vec<(usize, usize, usize)> = (0..spec.seeds)
        .flat_map(|s| {
            (0..spec.train_fractions.len())
                .flat_map(move |f| (0..spec.metrics.len()).map(move |m| (s, f, m)))
        })
        .collect();
    let nk = spec.ks.len();
    let nl = spec.l_values.len();
    type Job = Vec<Tally>;
    let results: Vec<Option<Job>> = jobs
        .par_iter()
        .map(|&(seed, fi, mi)| -> Result<Option<Job>> {
            let order = run_permutation(n, spec.rng_seed, seed);
            let train_len = train_size(pool, spec.train_fractions[fi]);
            let Some(k_max) = spec.ks.iter().copied().filter(|&k| k <= train_len).max() else {
                return Ok(None);
            };
            let train: Vec<Sample> = order[..train_len]
                .iter()
                .map(|&i| Sample {
                    features: obs[i].features.clone(),
                    label: truths[i],
                })
                .collect();
            let model = KnnModel::new(train, k_max, spec.metrics[mi], 50.0)?;
            let mut tallies = vec![Tally::default(); 2 * nk * nl];
            let sets = [&order[pool..pool + n_val], &order[pool + n_val..pool + n_val + n_test]];
            for (si, set) in sets.iter().enumerate() {
                for &i in set.iter() {
                    let nearest = model.nearest(&obs[i].features)?;
                    let labels: Vec<Label> =
                        nearest.iter().map(|&(j, _)| model.dataset()[j].label).collect();
                    for (ki, &k) in spec.ks.iter().enumerate() {
                        if k > train_len {
                            continue;
                        }
                        for (li, &l) in spec.l_values.iter().enumerate() {
                            let d = decide(&labels[..k], k, l)?;
                            tallies[(si * nk + ki) * nl + li].add(d, truths[i]);
                        }
                    }
                }
            }
            Ok(Some(tallies))
        })
        .collect::<Result<_>>()?;

    let job_index = |s: usize, f: usize, m: usize| (s * spec.train_fractions.len() + f) * spec.metrics.len() + m;
    let mut rows = Vec::new();
    for (si, mode) in ["validation", "test"].into_iter().enumerate() {
        for (ki, &k) in spec.ks.iter().enumerate() {
            for (mi, &metric) in spec.metrics.iter().enumerate() {
                for (li, &l_value) in spec.l_values.iter().enumerate() {
                    for (fi, &fraction) in spec.train_fractions.iter().enumerate() {
                        let feasible = train_size(pool, fraction) >= k;
                        let stats = feasible.then(|| {
                            let per_seed: Vec<Tally> = (0..spec.seeds)
                                .map(|s| {
                                    results[job_index(s, fi, mi)].as_ref().expect("feasible job")
                                        [(si * nk + ki) * nl + li]
                                })
                                .collect();
                            average(&per_seed)
                        });
                        rows.push(GridRow {
                            mode,
                            k,
                            metric,
                            l_value,
                            train_fraction: fraction,
                            stats,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn run_online_cells(prepared: &PreparedTrials, spec: &GridSpec) -> Result<Vec<GridRow>> {
    let cells: Vec<(usize, Metric, f64)> = spec
        .ks
        .iter()
        .flat_map(|&k| {
            spec.metrics
                .iter()
                .flat_map(move |&m| spec.l_values.iter().map(move |&l| (k, m, l)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(k, metric, l_value)| {
            let seed_size = if spec.seed_size == 0 { 2 * k } else { spec.seed_size };
            let cfg = LoopConfig {
                k,
                metric,
                l_value,
                retrain_interval: spec.retrain_interval,
                seed_size,
                preprocess: spec.preprocess,
                rng_seed: spec.rng_seed,
                n_runs: spec.runs,
                ..LoopConfig::default()
            };
            let row = |stats| GridRow {
                mode: "online",
                k,
                metric,
                l_value,
                train_fraction: 1.0,
                stats,
            };
            if seed_size < k || prepared.len() <= seed_size {
                return Ok(row(None));
            }
            let reports = prepared.run_replicated(&cfg)?;
            let s = summarize_runs(&reports)?;
            Ok(row(Some(CellStats {
                precision: s.precision,
                recall: s.recall,
                uncertain_pct: 100.0 * s.uncertain / s.samples,
                tp: s.tp,
                fp: s.fp,
                tn: s.tn,
                fn_: s.fn_,
            })))
        })
        .collect()
}

pub fn write_grid<W: Write>(mut out: W, echo: &[(String, String)], rows: &[GridRow]) -> Result<()> {
    write_echo(&mut out, echo)?;
    let mut w = csv_writer(out);
    let err = |e: csv::Error| CliError::Data(format!("writing CSV: {e}"));
    w.write_record(GRID_COLUMNS).map_err(err)?;
    for r in rows {
        let mut fields = vec![
            r.mode.to_string(),
            r.k.to_string(),
            r.metric.to_string(),
            r.l_value.to_string(),
            r.train_fraction.to_string(),
        ];
        match &r.stats {
            Some(s) => fields.extend([
                fmt_opt(s.precision),
                fmt_opt(s.recall),
                s.uncertain_pct.to_string(),
                s.tp.to_string(),
                s.fp.to_string(),
                s.tn.to_string(),
                s.fn_.to_string(),
            ]),
            None => fields.extend(std::iter::repeat_n("infeasible".to_string(), 7)),
        }
        w.write_record(&fields).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("writing CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sized_split() {
        assert_eq!(split_sizes(704), (504, 100, 100));
        let (pool, val, test) = split_sizes(40);
        assert_eq!(pool + val + test, 40);
        assert_eq!(val, 6);
        assert_eq!(split_sizes(2), (2, 0, 0));
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::default().validate().is_ok());
        let bad = [
            GridSpec {
                ks: vec![],
                ..GridSpec::default()
            },
            GridSpec {
                l_values: vec![40.0],
                ..GridSpec::default()
            },
            GridSpec {
                train_fractions: vec![0.0],
                ..GridSpec::default()
            },
            GridSpec {
                seeds: 0,
                ..GridSpec::default()
            },
        ];
        for spec in bad {
            assert_eq!(spec.validate().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn averages_skip_undefined_precision() {
        let a = Tally {
            tp: 3,
            fp: 1,
            tn: 2,
            fn_: 0,
            uncertain: 4,
        };
        let b = Tally {
            tn: 5,
            uncertain: 5,
            ..Tally::default()
        };
        let s = average(&[a, b]);
        assert_eq!(s.precision, Some(0.75));
        assert_eq!(s.recall, Some(1.0));
        assert_eq!(s.uncertain_pct, 45.0);
        assert_eq!(s.tp, 1.5);
    }
}
