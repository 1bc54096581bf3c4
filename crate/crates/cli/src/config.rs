//! Flag groups shared by the subcommands, and the `--config` file that can
//! supply any of them. Flags given on the command line win over the file.

use std::path::Path;

use clap::Args;
use serde::Deserialize;

use crate::CliError;

macro_rules! fill {
    ($dst:expr, $src:expr; $($field:ident),+ $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct DataArgs {
    /// Benchmark problem, e.g. TP, ZDT1, DTLZ7.
    #[arg(long)]
    pub problem: Option<String>,
    /// Number of tasks to generate.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Objects per task.
    #[arg(long)]
    pub size: Option<usize>,
    /// Generation seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl DataArgs {
    pub fn fill_from(&mut self, cfg: &RunConfig) {
        fill!(self, cfg; problem, tasks, size, seed);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Tasks per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak of the cyclical learning rate.
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long)]
    pub base_lr_fraction: Option<f64>,
    /// Learning-rate cycle length in steps (default: two epochs).
    #[arg(long)]
    pub cycle_steps: Option<usize>,
    /// Loss weights po,dom,mds,l2 (must sum to 1).
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Batch-norm placement: after | before (the ReLU).
    #[arg(long)]
    pub norm_placement: Option<String>,
    /// Optimizer: adam | sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Which unchosen objects the dominance term covers: all | chosen.
    #[arg(long)]
    pub dom_scope: Option<String>,
    /// Initialization and shuffling seed.
    #[arg(long)]
    pub train_seed: Option<u64>,
}

impl TrainArgs {
    pub fn fill_from(&mut self, cfg: &RunConfig) {
        fill!(self, cfg; epochs, batch_size, max_lr, base_lr_fraction, cycle_steps, weights,
              layers, units, output_dim, norm_placement, optimizer, dom_scope, train_seed);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct TuneArgs {
    /// Number of trials.
    #[arg(long)]
    pub budget: Option<usize>,
    /// bayesian | random.
    #[arg(long)]
    pub tuner: Option<String>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub layers_min: Option<usize>,
    #[arg(long)]
    pub layers_max: Option<usize>,
    #[arg(long)]
    pub units_min: Option<usize>,
    #[arg(long)]
    pub units_max: Option<usize>,
    /// Tuning seed.
    #[arg(long)]
    pub tune_seed: Option<u64>,
}

impl TuneArgs {
    pub fn fill_from(&mut self, cfg: &RunConfig) {
        fill!(self, cfg; budget, tuner, lr_min, lr_max, layers_min, layers_max, units_min,
              units_max, tune_seed);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct CvArgs {
    /// Cross-validation repetitions.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Fraction of tasks held out for testing.
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Fraction of the remainder used for validation.
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
}

impl CvArgs {
    pub fn fill_from(&mut self, cfg: &RunConfig) {
        fill!(self, cfg; reps, test_frac, val_frac, cv_seed);
    }
}

/// Contents of a `--config` file: flat `key = value` lines whose keys are
/// the long flag names with `_` in place of `-`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub problems: Option<Vec<String>>,
    pub tasks: Option<usize>,
    pub size: Option<usize>,
    pub seed: Option<u64>,

    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_lr: Option<f64>,
    pub base_lr_fraction: Option<f64>,
    pub cycle_steps: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub layers: Option<usize>,
    pub units: Option<usize>,
    pub output_dim: Option<usize>,
    pub norm_placement: Option<String>,
    pub optimizer: Option<String>,
    pub dom_scope: Option<String>,
    pub train_seed: Option<u64>,

    pub budget: Option<usize>,
    pub tuner: Option<String>,
    pub lr_min: Option<f64>,
    pub lr_max: Option<f64>,
    pub layers_min: Option<usize>,
    pub layers_max: Option<usize>,
    pub units_min: Option<usize>,
    pub units_max: Option<usize>,
    pub tune_seed: Option<u64>,

    pub reps: Option<usize>,
    pub test_frac: Option<f64>,
    pub val_frac: Option<f64>,
    pub cv_seed: Option<u64>,

    pub trials: Option<usize>,
    pub p: Option<f64>,
    pub out: Option<String>,
    pub out_dir: Option<String>,
    pub log: Option<String>,
    pub ablate_mds: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }
}
