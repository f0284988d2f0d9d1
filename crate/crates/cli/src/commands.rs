use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use forcecheck_core::datagen::{gen_dataset, GenParams};
use forcecheck_core::metrics::{mean_window_series, summarize_runs, SummaryRow, TimeModel};
use forcecheck_core::online::{LoopConfig, PreparedTrials};

use crate::dataset::{read_dataset_file, write_dataset_file};
use crate::error::{CliError, Result};
use crate::grid::{run_grid, write_grid, GridRow, GridSpec};
use crate::report::{write_records, write_summary, write_windows};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const WINDOWS_FILE: &str = "windows.csv";

/// Generates a synthetic dataset file.
pub fn cmd_gen(
    out: &Path,
    n_pos: usize,
    n_neg: usize,
    params: &GenParams,
    seed: u64,
    force: bool,
) -> Result<usize> {
    let trials = gen_dataset(n_pos, n_neg, params, seed)?;
    write_dataset_file(out, &trials, params.n_samples, params.sample_rate, force)?;
    Ok(trials.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSettings {
    /// Loop settings shared by every l-value; its own `l_value` is ignored.
    pub base: LoopConfig,
    pub l_values: Vec<f64>,
    pub window: usize,
    pub time_model: TimeModel,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        Self {
            base: LoopConfig::default(),
            l_values: vec![100.0, 50.0],
            window: forcecheck_core::metrics::DEFAULT_WINDOW,
            time_model: TimeModel::default(),
        }
    }
}

impl OnlineSettings {
    pub fn validate(&self) -> Result<()> {
        if self.l_values.is_empty() {
            return Err(CliError::Usage("at least one l-value is required".into()));
        }
        for &l in &self.l_values {
            LoopConfig {
                l_value: l,
                ..self.base
            }
            .validate()?;
        }
        if self.window == 0 {
            return Err(CliError::Usage("window must be positive".into()));
        }
        self.time_model.validate()?;
        Ok(())
    }

    pub fn echo(&self, dataset: &Path) -> Vec<(String, String)> {
        let b = &self.base;
        let l_values: Vec<String> = self.l_values.iter().map(|l| l.to_string()).collect();
        [
            ("command", "online".to_string()),
            ("data", dataset.display().to_string()),
            ("k", b.k.to_string()),
            ("metric", b.metric.to_string()),
            ("l-value", l_values.join(",")),
            ("retrain-interval", b.retrain_interval.to_string()),
            ("seed-size", b.seed_size.to_string()),
            ("seed-positive-fraction", b.seed_min_positive_fraction.to_string()),
            ("runs", b.n_runs.to_string()),
            ("rng-seed", b.rng_seed.to_string()),
            ("shuffle", b.shuffle.to_string()),
            ("sg-window", b.preprocess.sg_window.to_string()),
            ("sg-order", b.preprocess.sg_order.to_string()),
            ("ds-window", b.preprocess.ds_window.to_string()),
            ("ds-stride", b.preprocess.ds_stride.to_string()),
            ("window", self.window.to_string()),
            ("iteration-cost", self.time_model.iteration_cost.to_string()),
            ("verification-cost", self.time_model.verification_cost.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Replays the online loop for every requested l-value and writes
/// `records.jsonl`, `summary.csv` and `windows.csv` into `out_dir`.
pub fn cmd_online(dataset: &Path, settings: &OnlineSettings, out_dir: &Path) -> Result<Vec<SummaryRow>> {
    settings.validate()?;
    let trials = read_dataset_file(dataset)?;
    if trials.len() <= settings.base.seed_size {
        return Err(CliError::Infeasible(format!(
            "{} trials cannot fill a seed phase of {}",
            trials.len(),
            settings.base.seed_size
        )));
    }
    let prepared = PreparedTrials::new(&trials, &settings.base.preprocess)?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let records_path = out_dir.join(RECORDS_FILE);
    let mut records = create(&records_path)?;
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for &l_value in &settings.l_values {
        let cfg = LoopConfig {
            l_value,
            ..settings.base
        };
        let reports = prepared.run_replicated(&cfg)?;
        write_records(&mut records, &reports)?;
        summaries.push(summarize_runs(&reports)?);
        series.push((
            l_value,
            mean_window_series(&reports, settings.window, &settings.time_model)?,
        ));
    }
    records.flush().map_err(|e| CliError::io(&records_path, e))?;

    let echo = settings.echo(dataset);
    write_summary(
        create(&out_dir.join(SUMMARY_FILE))?,
        &echo,
        &summaries,
        &settings.time_model,
    )?;
    write_windows(create(&out_dir.join(WINDOWS_FILE))?, &echo, &series)?;
    Ok(summaries)
}

/// Runs a grid search and writes its CSV. Fails with an infeasible-config
/// error only when no cell could be evaluated.
pub fn cmd_grid(dataset: &Path, spec: &GridSpec, out: &Path) -> Result<Vec<GridRow>> {
    spec.validate()?;
    let trials = read_dataset_file(dataset)?;
    let rows = run_grid(&trials, spec)?;
    let mut echo = vec![
        ("command".to_string(), "grid".to_string()),
        ("data".to_string(), dataset.display().to_string()),
    ];
    echo.extend(spec.echo());
    write_grid(create(out)?, &echo, &rows)?;
    if rows.iter().all(|r| r.stats.is_none()) {
        return Err(CliError::Infeasible(
            "no grid cell has enough training samples for its k".into(),
        ));
    }
    Ok(rows)
}
