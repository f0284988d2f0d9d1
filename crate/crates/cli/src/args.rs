//! Command-line arguments and their resolution against an optional config
//! file. Every flag can also be given as `flag-name = value` in the file
//! passed with `--config`; flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use forcecheck_core::datagen::GenParams;
use forcecheck_core::metrics::TimeModel;
use forcecheck_core::online::LoopConfig;
use forcecheck_core::signal::PreprocessConfig;
use forcecheck_core::Metric;

use crate::commands::{cmd_gen, cmd_grid, cmd_online, OnlineSettings};
use crate::config::ConfigFile;
use crate::error::{CliError, Result};
use crate::grid::{GridMode, GridSpec};

#[derive(Debug, Parser)]
#[command(name = "forcecheck", version, about = "Self-supervised k-NN insertion classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic force-trace dataset
    Gen(GenArgs),
    /// Replay the online self-supervised loop over a dataset
    Online(OnlineArgs),
    /// Sweep k, metric, l-value and training size
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output dataset file
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_pos: Option<usize>,
    #[arg(long)]
    pub n_neg: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub outlier_probability: Option<f64>,
    #[arg(long)]
    pub outlier_scale: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Overwrite an existing output file
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Preprocessing flags shared by `online` and `grid`.
#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub sg_window: Option<usize>,
    #[arg(long)]
    pub sg_order: Option<usize>,
    #[arg(long)]
    pub ds_window: Option<usize>,
    #[arg(long)]
    pub ds_stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    /// Dataset file
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// cosine, euclidean, manhattan, minkowski or minkowski:<p>
    #[arg(long)]
    pub metric: Option<Metric>,
    /// One or more l-values (percent), comma separated
    #[arg(long, value_delimiter = ',')]
    pub l_value: Vec<f64>,
    #[arg(long)]
    pub retrain_interval: Option<usize>,
    #[arg(long)]
    pub seed_size: Option<usize>,
    #[arg(long)]
    pub seed_positive_fraction: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Keep the dataset order in every run
    #[arg(long)]
    pub no_shuffle: bool,
    /// Sliding-window length for the series output
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub iteration_cost: Option<f64>,
    #[arg(long)]
    pub verification_cost: Option<f64>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// static (split and score held-out sets) or online (replay the loop)
    #[arg(long)]
    pub mode: Option<GridMode>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<Metric>,
    #[arg(long, value_delimiter = ',')]
    pub l_value: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub train_fractions: Vec<f64>,
    /// Static mode: shuffled splits per cell
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Online mode: replicated runs per cell
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub retrain_interval: Option<usize>,
    /// Online mode seed size; 0 uses 2k per cell
    #[arg(long)]
    pub seed_size: Option<usize>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const PREPROCESS_KEYS: [&str; 4] = ["sg-window", "sg-order", "ds-window", "ds-stride"];

const GEN_KEYS: &[&str] = &[
    "out",
    "n-pos",
    "n-neg",
    "rng-seed",
    "noise-std",
    "outlier-probability",
    "outlier-scale",
    "n-samples",
    "sample-rate",
];

const ONLINE_KEYS: &[&str] = &[
    "data",
    "out",
    "k",
    "metric",
    "l-value",
    "retrain-interval",
    "seed-size",
    "seed-positive-fraction",
    "runs",
    "rng-seed",
    "window",
    "iteration-cost",
    "verification-cost",
];

const GRID_KEYS: &[&str] = &[
    "data",
    "out",
    "mode",
    "k",
    "metric",
    "l-value",
    "train-fractions",
    "seeds",
    "runs",
    "rng-seed",
    "retrain-interval",
    "seed-size",
];

fn load_config(path: &Option<PathBuf>, keys: &[&str]) -> Result<ConfigFile> {
    let allowed: Vec<&str> = keys.iter().copied().chain(PREPROCESS_KEYS).collect();
    match path {
        Some(p) => ConfigFile::load(p, &allowed),
        None => Ok(ConfigFile::default()),
    }
}

fn required(value: Option<PathBuf>, file: &ConfigFile, key: &str) -> Result<PathBuf> {
    match value {
        Some(v) => Ok(v),
        None => file
            .get::<PathBuf>(key)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required"))),
    }
}

impl PreprocessArgs {
    fn resolve(&self, file: &ConfigFile) -> Result<PreprocessConfig> {
        let d = PreprocessConfig::default();
        Ok(PreprocessConfig {
            sg_window: file.pick(self.sg_window, "sg-window", d.sg_window)?,
            sg_order: file.pick(self.sg_order, "sg-order", d.sg_order)?,
            ds_window: file.pick(self.ds_window, "ds-window", d.ds_window)?,
            ds_stride: file.pick(self.ds_stride, "ds-stride", d.ds_stride)?,
        })
    }
}

pub struct GenJob {
    pub out: PathBuf,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
    pub params: GenParams,
    pub force: bool,
}

impl GenArgs {
    pub fn resolve(self) -> Result<GenJob> {
        let file = load_config(&self.config, GEN_KEYS)?;
        let d = GenParams::default();
        let params = GenParams {
            noise_std: file.pick(self.noise_std, "noise-std", d.noise_std)?,
            outlier_probability: file.pick(
                self.outlier_probability,
                "outlier-probability",
                d.outlier_probability,
            )?,
            outlier_scale: file.pick(self.outlier_scale, "outlier-scale", d.outlier_scale)?,
            n_samples: file.pick(self.n_samples, "n-samples", d.n_samples)?,
            sample_rate: file.pick(self.sample_rate, "sample-rate", d.sample_rate)?,
            ..d
        };
        params.validate()?;
        Ok(GenJob {
            out: required(self.out, &file, "out")?,
            n_pos: file.pick(self.n_pos, "n-pos", 297)?,
            n_neg: file.pick(self.n_neg, "n-neg", 407)?,
            seed: file.pick(self.rng_seed, "rng-seed", 0)?,
            params,
            force: self.force,
        })
    }
}

pub struct OnlineJob {
    pub data: PathBuf,
    pub out: PathBuf,
    pub settings: OnlineSettings,
}

impl OnlineArgs {
    pub fn resolve(self) -> Result<OnlineJob> {
        let file = load_config(&self.config, ONLINE_KEYS)?;
        let d = OnlineSettings::default();
        let b = d.base;
        let base = LoopConfig {
            k: file.pick(self.k, "k", b.k)?,
            metric: file.pick(self.metric, "metric", b.metric)?,
            retrain_interval: file.pick(self.retrain_interval, "retrain-interval", b.retrain_interval)?,
            seed_size: file.pick(self.seed_size, "seed-size", b.seed_size)?,
            seed_min_positive_fraction: file.pick(
                self.seed_positive_fraction,
                "seed-positive-fraction",
                b.seed_min_positive_fraction,
            )?,
            preprocess: self.preprocess.resolve(&file)?,
            rng_seed: file.pick(self.rng_seed, "rng-seed", b.rng_seed)?,
            n_runs: file.pick(self.runs, "runs", b.n_runs)?,
            shuffle: !self.no_shuffle,
            ..b
        };
        let settings = OnlineSettings {
            base,
            l_values: file.pick_list(self.l_value, "l-value", d.l_values)?,
            window: file.pick(self.window, "window", d.window)?,
            time_model: TimeModel {
                iteration_cost: file.pick(
                    self.iteration_cost,
                    "iteration-cost",
                    d.time_model.iteration_cost,
                )?,
                verification_cost: file.pick(
                    self.verification_cost,
                    "verification-cost",
                    d.time_model.verification_cost,
                )?,
            },
        };
        settings.validate()?;
        Ok(OnlineJob {
            data: required(self.data, &file, "data")?,
            out: required(self.out, &file, "out")?,
            settings,
        })
    }
}

pub struct GridJob {
    pub data: PathBuf,
    pub out: PathBuf,
    pub spec: GridSpec,
}

impl GridArgs {
    pub fn resolve(self) -> Result<GridJob> {
        let file = load_config(&self.config, GRID_KEYS)?;
        let d = GridSpec::default();
        let spec = GridSpec {
            mode: file.pick(self.mode, "mode", d.mode)?,
            ks: file.pick_list(self.k, "k", d.ks)?,
            metrics: file.pick_list(self.metric, "metric", d.metrics)?,
            l_values: file.pick_list(self.l_value, "l-value", d.l_values)?,
            train_fractions: file.pick_list(self.train_fractions, "train-fractions", d.train_fractions)?,
            seeds: file.pick(self.seeds, "seeds", d.seeds)?,
            rng_seed: file.pick(self.rng_seed, "rng-seed", d.rng_seed)?,
            runs: file.pick(self.runs, "runs", d.runs)?,
            retrain_interval: file.pick(self.retrain_interval, "retrain-interval", d.retrain_interval)?,
            seed_size: file.pick(self.seed_size, "seed-size", d.seed_size)?,
            preprocess: self.preprocess.resolve(&file)?,
        };
        spec.validate()?;
        Ok(GridJob {
            data: required(self.data, &file, "data")?,
            out: required(self.out, &file, "out")?,
            spec,
        })
    }
}

/// Executes a parsed command line, returning a one-line status message.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Gen(args) => {
            let job = args.resolve()?;
            let n = cmd_gen(&job.out, job.n_pos, job.n_neg, &job.params, job.seed, job.force)?;
            Ok(format!("wrote {n} trials to {}", job.out.display()))
        }
        Command::Online(args) => {
            let job = args.resolve()?;
            let rows = cmd_online(&job.data, &job.settings, &job.out)?;
            let mut msg = format!("wrote results to {}", job.out.display());
            for r in rows {
                msg.push_str(&format!(
                    "\n  l={}: precision {} verifications {} dataset {}",
                    r.l_value,
                    crate::report::fmt_opt(r.precision),
                    r.verifications,
                    r.dataset_size
                ));
            }
            Ok(msg)
        }
        Command::Grid(args) => {
            let job = args.resolve()?;
            let rows = cmd_grid(&job.data, &job.spec, &job.out)?;
            let infeasible = rows.iter().filter(|r| r.stats.is_none()).count();
            Ok(format!(
                "wrote {} grid rows ({infeasible} infeasible) to {}",
                rows.len(),
                job.out.display()
            ))
        }
    }
}
