//! Mini-batch training of the embedding network under the Pareto-embedding
//! loss with a triangular cyclical learning rate.

use std::time::{Duration, Instant};

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::choice::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::losses::{DomScope, LossBreakdown, LossWeights, PairwiseLoss};
use crate::net::{Architecture, NetworkParams, ParamGrads};

/// Decorrelates the shuffling stream from the initialization stream.
const SHUFFLE_STREAM: u64 = 0x0053_4855_4646_4c45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Sgd {
        momentum: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Tasks per optimizer step.
    pub batch_size: usize,
    pub max_lr: f64,
    /// `base_lr = max_lr · base_lr_fraction`.
    pub base_lr_fraction: f64,
    /// Full cycle length in steps; `None` means two epochs' worth of steps.
    pub cycle_steps: Option<usize>,
    pub weights: LossWeights,
    #[serde(default)]
    pub dom_scope: DomScope,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 64,
            max_lr: 1e-2,
            base_lr_fraction: 0.1,
            cycle_steps: None,
            weights: LossWeights::uniform(),
            dom_scope: DomScope::AllPoints,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::invalid("max_lr must be positive"));
        }
        if !(0.0..=1.0).contains(&self.base_lr_fraction) {
            return Err(Error::invalid("base_lr_fraction must lie in [0, 1]"));
        }
        if self.cycle_steps == Some(0) {
            return Err(Error::invalid("cycle_steps must be at least 1"));
        }
        self.weights.validate()
    }

    pub fn schedule(&self, steps_per_epoch: usize) -> CyclicalSchedule {
        CyclicalSchedule {
            max_lr: self.max_lr,
            base_fraction: self.base_lr_fraction,
            cycle_steps: self.cycle_steps.unwrap_or(2 * steps_per_epoch.max(1)),
        }
    }
}

/// Triangular wave between `max_lr · base_fraction` and `max_lr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicalSchedule {
    pub max_lr: f64,
    pub base_fraction: f64,
    pub cycle_steps: usize,
}

impl CyclicalSchedule {
    pub fn base_lr(&self) -> f64 {
        self.max_lr * self.base_fraction
    }

    pub fn lr(&self, step: usize) -> f64 {
        cyclical_lr(step, self)
    }
}

/// Learning rate at `step`: starts at the base rate, peaks at mid-cycle.
pub fn cyclical_lr(step: usize, schedule: &CyclicalSchedule) -> f64 {
    let cycle = schedule.cycle_steps.max(1) as f64;
    let phase = (step as f64 % cycle) / cycle;
    let height = 1.0 - (2.0 * phase - 1.0).abs();
    let base = schedule.base_lr();
    base + (schedule.max_lr - base) * height
}

/// Mean training loss (and optional validation score) of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_a_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub params: NetworkParams,
    pub steps: usize,
    pub wall_clock: Duration,
    pub seed: u64,
}

enum OptimizerState {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        t: i32,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
    Sgd {
        momentum: f64,
        velocity: Vec<Vec<f64>>,
    },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, params: &mut NetworkParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .trainable_mut()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        match kind {
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                t: 0,
                m: zeros.clone(),
                v: zeros,
            },
            OptimizerKind::Sgd { momentum } => OptimizerState::Sgd {
                momentum,
                velocity: zeros,
            },
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grads: &ParamGrads, lr: f64) {
        let grads = grads.slices();
        let mut slices = params.trainable_mut();
        match self {
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                t,
                m,
                v,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (s, p) in slices.iter_mut().enumerate() {
                    for (e, w) in p.iter_mut().enumerate() {
                        let g = grads[s][e];
                        let mm = &mut m[s][e];
                        let vv = &mut v[s][e];
                        *mm = *beta1 * *mm + (1.0 - *beta1) * g;
                        *vv = *beta2 * *vv + (1.0 - *beta2) * g * g;
                        *w -= lr * (*mm / c1) / ((*vv / c2).sqrt() + *epsilon);
                    }
                }
            }
            OptimizerState::Sgd { momentum, velocity } => {
                for (s, p) in slices.iter_mut().enumerate() {
                    for (e, w) in p.iter_mut().enumerate() {
                        let u = &mut velocity[s][e];
                        *u = *momentum * *u + grads[s][e];
                        *w -= lr * *u;
                    }
                }
            }
        }
    }
}

/// Batches of task indices. A trailing batch too small for batch statistics
/// is merged into its predecessor.
fn make_batches(order: &[usize], batch_size: usize, task_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() * task_size < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

fn stack_features(data: &Dataset, batch: &[usize]) -> Array2<f64> {
    let m = data.task_size();
    let mut x = Array2::zeros((batch.len() * m, data.feature_dim()));
    for (b, &t) in batch.iter().enumerate() {
        x.slice_mut(s![b * m..(b + 1) * m, ..])
            .assign(&data.pairs()[t].0.features());
    }
    x
}

/// Task-averaged loss of a batch and its gradient with respect to the
/// network output rows.
pub(crate) fn batch_loss_and_grad(
    loss: &PairwiseLoss,
    data: &Dataset,
    batch: &[usize],
    z: &Array2<f64>,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let m = data.task_size();
    let scale = 1.0 / batch.len() as f64;
    let mut grad = Array2::zeros(z.raw_dim());
    let mut sum = LossBreakdown::default();
    for (b, &t) in batch.iter().enumerate() {
        let (task, mask) = &data.pairs()[t];
        let rows = s![b * m..(b + 1) * m, ..];
        let part = loss.accumulate_grad(
            task.features(),
            z.slice(rows),
            mask,
            scale,
            grad.slice_mut(rows),
        )?;
        sum.add_assign(&part);
    }
    Ok((sum.scaled(scale), grad))
}

/// Trains a fresh network on `data`; deterministic in `(data, arch, cfg)`.
pub fn train(
    data: &Dataset,
    val: Option<&Dataset>,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if let Some(v) = val {
        if v.feature_dim() != data.feature_dim() {
            return Err(Error::invalid(
                "validation data has a different feature dimension",
            ));
        }
    }
    let started = Instant::now();
    let mut params = NetworkParams::init(data.feature_dim(), arch, cfg.seed)?;
    let loss = PairwiseLoss {
        weights: cfg.weights,
        dom_scope: cfg.dom_scope,
    };
    let mut optimizer = OptimizerState::new(cfg.optimizer, &mut params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let steps_per_epoch = make_batches(&order, cfg.batch_size, data.task_size()).len();
    let schedule = cfg.schedule(steps_per_epoch);

    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for batch in make_batches(&order, cfg.batch_size, data.task_size()) {
            let x = stack_features(data, &batch);
            let (z, trace) = params.forward_train(x.view())?;
            let (batch_loss, grad_z) = batch_loss_and_grad(&loss, data, &batch, &z)?;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, step });
            }
            let grads = params.backward(&trace, grad_z.view())?;
            if !grads.is_finite() {
                return Err(Error::TrainingDiverged { epoch, step });
            }
            optimizer.step(&mut params, &grads, schedule.lr(step));
            sum.add_assign(&batch_loss.scaled(batch.len() as f64));
            step += 1;
        }
        let val_a_mean = val
            .map(|v| evaluate(v, &params).map(|r| r.mean))
            .transpose()?;
        epochs.push(EpochRecord {
            epoch,
            loss: sum.scaled(1.0 / data.len() as f64),
            val_a_mean,
        });
    }
    Ok(TrainReport {
        epochs,
        params,
        steps: step,
        wall_clock: started.elapsed(),
        seed: cfg.seed,
    })
}
