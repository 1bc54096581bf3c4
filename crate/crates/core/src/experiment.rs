//! The end-to-end protocol: generate a benchmark, cross-validate a tuned
//! trainer on it, optionally with the paired MDS ablation.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{generate_dataset, Problem};
use crate::choice::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{
    ablate_mds, evaluate, monte_carlo_cv, Arm, CvConfig, CvOutcome, FitContext, FitResult,
};
use crate::net::{NetworkParams, NormConfig};
use crate::training::{train, TrainConfig};
use crate::tuning::{tune, SearchSpace, TuneOutcome, TunerKind};

/// Tunes on a train/validation pair and returns the best trial's model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedTrainer {
    /// Everything but the tuned fields (weights, peak learning rate, seed).
    pub base: TrainConfig,
    pub space: SearchSpace,
    pub budget: usize,
    pub tuner: TunerKind,
    pub output_dim: usize,
    pub norm: NormConfig,
}

impl Default for TunedTrainer {
    fn default() -> Self {
        TunedTrainer {
            base: TrainConfig::default(),
            space: SearchSpace::default(),
            budget: 60,
            tuner: TunerKind::Bayesian,
            output_dim: 2,
            norm: NormConfig::default(),
        }
    }
}

impl TunedTrainer {
    /// Runs the search. A trial that diverges scores 0 and keeps no model.
    pub fn tune(
        &self,
        space: &SearchSpace,
        train_set: &Dataset,
        val: &Dataset,
        seed: u64,
    ) -> Result<TuneOutcome<Option<NetworkParams>>> {
        tune(space, self.budget, seed, self.tuner, |hc, trial| {
            let cfg = TrainConfig {
                seed: trial.seed,
                ..hc.apply(&self.base)
            };
            let arch = hc.architecture(self.output_dim, self.norm);
            match train(train_set, None, &arch, &cfg) {
                Ok(report) => {
                    let score = evaluate(val, &report.params)?.mean;
                    Ok((score, Some(report.params)))
                }
                Err(Error::TrainingDiverged { .. }) => Ok((0.0, None)),
                Err(e) => Err(e),
            }
        })
    }

    /// Fitting hook for [`monte_carlo_cv`] and [`ablate_mds`].
    pub fn fit(&self, ctx: &FitContext<'_>, arm: Arm) -> Result<FitResult> {
        let space = match arm {
            Arm::Full => self.space,
            Arm::NoMds => self.space.without_mds(),
        };
        let outcome = self.tune(&space, ctx.train, ctx.val, ctx.seed)?;
        let params = outcome.best_payload.ok_or_else(|| {
            Error::invalid(format!(
                "every tuning trial diverged in repetition {}",
                ctx.repetition
            ))
        })?;
        Ok(FitResult {
            params,
            config: Some(outcome.best_config),
        })
    }
}

/// Dataset and protocol parameters of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_tasks: usize,
    pub task_size: usize,
    pub data_seed: u64,
    pub cv: CvConfig,
    pub trainer: TunedTrainer,
}

#[derive(Debug, Clone)]
pub struct ProblemOutcome {
    pub problem: Problem,
    pub n_tasks: usize,
    pub full: CvOutcome,
    pub no_mds: Option<CvOutcome>,
}

impl ProblemOutcome {
    pub fn difference(&self) -> Option<f64> {
        self.no_mds
            .as_ref()
            .map(|n| n.summary.mean - self.full.summary.mean)
    }
}

/// Generates `problem`'s dataset and runs the protocol on it.
pub fn run_problem(
    problem: Problem,
    cfg: &ExperimentConfig,
    ablate: bool,
) -> Result<ProblemOutcome> {
    let data = generate_dataset(&problem.spec(), cfg.n_tasks, cfg.task_size, cfg.data_seed)?;
    let (full, no_mds) = if ablate {
        let out = ablate_mds(&data, &cfg.cv, |ctx, arm| cfg.trainer.fit(ctx, arm))?;
        (out.full, Some(out.no_mds))
    } else {
        let out = monte_carlo_cv(&data, &cfg.cv, |ctx| cfg.trainer.fit(ctx, Arm::Full))?;
        (out, None)
    };
    Ok(ProblemOutcome {
        problem,
        n_tasks: data.len(),
        full,
        no_mds,
    })
}
