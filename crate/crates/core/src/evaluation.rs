//! A-mean scoring, Monte Carlo cross-validation, the random-selection
//! baseline and the paired MDS ablation.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{pareto_front, ChoiceMask, Dataset};
use crate::error::{Error, Result};
use crate::net::NetworkParams;
use crate::seed::derive_seed;
use crate::tuning::HyperConfig;

/// Tasks embedded per inference call in [`evaluate`].
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_masks(truth: &ChoiceMask, pred: &ChoiceMask) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::invalid(format!(
                "mask lengths differ: {} vs {}",
                truth.len(),
                pred.len()
            )));
        }
        let mut c = Confusion::default();
        for (t, p) in truth.iter().zip(pred.iter()) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TPR + TNR) / 2`; a rate over an empty class counts as 1.
    pub fn a_mean(&self) -> f64 {
        let rate = |hit: usize, miss: usize| {
            if hit + miss == 0 {
                1.0
            } else {
                hit as f64 / (hit + miss) as f64
            }
        };
        0.5 * (rate(self.tp, self.fn_) + rate(self.tn, self.fp))
    }

    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Arithmetic mean of true-positive and true-negative rate of one prediction.
pub fn a_mean(truth: &ChoiceMask, pred: &ChoiceMask) -> Result<f64> {
    Confusion::from_masks(truth, pred).map(|c| c.a_mean())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: String,
    pub split: String,
    pub repetition: usize,
    pub seed: u64,
    pub per_task: Vec<f64>,
    /// Macro average over tasks.
    pub mean: f64,
    /// Sample standard deviation over tasks (0 for a single task).
    pub std: f64,
    /// Pooled counts over all evaluated objects.
    pub confusion: Confusion,
}

impl EvalReport {
    fn from_scores(
        problem: &str,
        split: &str,
        seed: u64,
        per_task: Vec<f64>,
        confusion: Confusion,
    ) -> Self {
        let (mean, std) = mean_std(&per_task);
        EvalReport {
            problem: problem.to_string(),
            split: split.to_string(),
            repetition: 0,
            seed,
            per_task,
            mean,
            std,
            confusion,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.per_task.len()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Predicts every task of `data` and scores it with the A-mean.
pub fn evaluate(data: &Dataset, params: &NetworkParams) -> Result<EvalReport> {
    if params.input_dim() != data.feature_dim() {
        return Err(Error::invalid(format!(
            "model takes {} features, dataset has {}",
            params.input_dim(),
            data.feature_dim()
        )));
    }
    let m = data.task_size();
    let mut per_task = Vec::with_capacity(data.len());
    let mut confusion = Confusion::default();
    for chunk in data.pairs().chunks(EVAL_CHUNK) {
        let mut x = Array2::zeros((chunk.len() * m, data.feature_dim()));
        for (b, (task, _)) in chunk.iter().enumerate() {
            x.slice_mut(s![b * m..(b + 1) * m, ..])
                .assign(&task.features());
        }
        let z = params.infer(x.view())?;
        for (b, (_, truth)) in chunk.iter().enumerate() {
            let pred = pareto_front(z.slice(s![b * m..(b + 1) * m, ..]))?;
            let c = Confusion::from_masks(truth, &pred)?;
            per_task.push(c.a_mean());
            confusion.add(&c);
        }
    }
    Ok(EvalReport::from_scores(
        &data.meta().problem,
        "all",
        data.meta().seed,
        per_task,
        confusion,
    ))
}

/// Scores `trials` independent Bernoulli(`p`) predictions, cycling through
/// the tasks of `data` in order.
pub fn random_baseline_report(
    data: &Dataset,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "inclusion probability must lie in (0, 1), got {p}"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_task = Vec::with_capacity(trials);
    let mut confusion = Confusion::default();
    for t in 0..trials {
        let (_, truth) = &data.pairs()[t % data.len()];
        let pred = ChoiceMask::new((0..truth.len()).map(|_| rng.random_bool(p)).collect());
        let c = Confusion::from_masks(truth, &pred)?;
        per_task.push(c.a_mean());
        confusion.add(&c);
    }
    Ok(EvalReport::from_scores(
        &data.meta().problem,
        "baseline",
        seed,
        per_task,
        confusion,
    ))
}

/// Monte Carlo estimate of the A-mean of random selection.
pub fn random_baseline(data: &Dataset, p: f64, trials: usize, seed: u64) -> Result<f64> {
    random_baseline_report(data, p, trials, seed).map(|r| r.mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub repetitions: usize,
    /// Fraction of all tasks held out for testing.
    pub test_frac: f64,
    /// Fraction of the remaining tasks used for validation.
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            repetitions: 5,
            test_frac: 0.1,
            val_frac: 1.0 / 9.0,
            seed: 0,
        }
    }
}

/// Task indices of one repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub repetition: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// `(train, val, test)` sizes for `n` tasks.
pub fn split_sizes(n: usize, test_frac: f64, val_frac: f64) -> Result<(usize, usize, usize)> {
    let open_unit = |f: f64| f > 0.0 && f < 1.0;
    if !open_unit(test_frac) || !open_unit(val_frac) {
        return Err(Error::invalid("split fractions must lie in (0, 1)"));
    }
    let test = (n as f64 * test_frac).round() as usize;
    let rest = n.saturating_sub(test);
    let val = (rest as f64 * val_frac).round() as usize;
    let train = rest.saturating_sub(val);
    if test == 0 || val == 0 || train == 0 || test + val + train != n {
        return Err(Error::invalid(format!(
            "{n} tasks are too few for a non-empty train/val/test split"
        )));
    }
    Ok((train, val, test))
}

/// Seeded shuffles of `0..n` cut into train/val/test, one per repetition.
pub fn cv_splits(n: usize, cfg: &CvConfig) -> Result<Vec<CvSplit>> {
    if cfg.repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    let (n_train, n_val, _) = split_sizes(n, cfg.test_frac, cfg.val_frac)?;
    Ok((0..cfg.repetitions)
        .map(|rep| {
            let seed = derive_seed(cfg.seed, rep as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let test = order.split_off(n_train + n_val);
            let val = order.split_off(n_train);
            CvSplit {
                repetition: rep,
                seed,
                train: order,
                val,
                test,
            }
        })
        .collect())
}

/// Seeded shuffle of `0..n` cut into `(train, val)` with `val_frac` of the
/// tasks in the second part.
pub fn holdout_split(n: usize, val_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let n_val = (n as f64 * val_frac).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::invalid(format!(
            "{n} tasks are too few for a train/validation split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order.split_off(n - n_val);
    Ok((order, val))
}

/// Inputs handed to a fitting hook for one repetition.
#[derive(Debug, Clone, Copy)]
pub struct FitContext<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub repetition: usize,
    pub seed: u64,
}

/// A model chosen for one repetition, with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NetworkParams,
    pub config: Option<HyperConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub repetitions: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub splits: Vec<CvSplit>,
    /// Test-set report per repetition.
    pub reports: Vec<EvalReport>,
    pub configs: Vec<Option<HyperConfig>>,
    pub summary: CvSummary,
}

/// Repeated random train/validation/test evaluation. `fit` receives the
/// training and validation parts (and may tune on them); its model is then
/// scored on the test part. Repetitions may run in parallel; results are
/// ordered by repetition.
pub fn monte_carlo_cv<F>(data: &Dataset, cfg: &CvConfig, fit: F) -> Result<CvOutcome>
where
    F: Fn(&FitContext<'_>) -> Result<FitResult> + Sync,
{
    let splits = cv_splits(data.len(), cfg)?;
    let results = splits
        .par_iter()
        .map(|split| {
            let train = data.subset(&split.train)?;
            let val = data.subset(&split.val)?;
            let test = data.subset(&split.test)?;
            let fitted = fit(&FitContext {
                train: &train,
                val: &val,
                repetition: split.repetition,
                seed: split.seed,
            })?;
            let mut report = evaluate(&test, &fitted.params)?;
            report.split = "test".to_string();
            report.repetition = split.repetition;
            report.seed = split.seed;
            Ok((report, fitted.config))
        })
        .collect::<Result<Vec<_>>>()?;
    let (reports, configs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
    let (mean, std) = mean_std(&means);
    Ok(CvOutcome {
        splits,
        reports,
        configs,
        summary: CvSummary {
            repetitions: cfg.repetitions,
            mean,
            std,
        },
    })
}

/// Arm of the MDS ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// All four loss weights are free.
    Full,
    /// The stress weight is pinned to zero.
    NoMds,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::NoMds => "no_mds",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub full: CvOutcome,
    pub no_mds: CvOutcome,
    /// `no_mds.mean − full.mean`.
    pub difference: f64,
}

/// Runs the full protocol once per arm on identical splits.
pub fn ablate_mds<F>(data: &Dataset, cfg: &CvConfig, fit: F) -> Result<AblationOutcome>
where
    F: Fn(&FitContext<'_>, Arm) -> Result<FitResult> + Sync,
{
    let full = monte_carlo_cv(data, cfg, |ctx| fit(ctx, Arm::Full))?;
    let no_mds = monte_carlo_cv(data, cfg, |ctx| {
        let fitted = fit(ctx, Arm::NoMds)?;
        if let Some(c) = &fitted.config {
            if c.weights.mds != 0.0 {
                return Err(Error::invalid(format!(
                    "ablation arm produced a configuration with mds weight {}",
                    c.weights.mds
                )));
            }
        }
        Ok(fitted)
    })?;
    let difference = no_mds.summary.mean - full.summary.mean;
    Ok(AblationOutcome {
        full,
        no_mds,
        difference,
    })
}
