//! Budgeted hyperparameter search over loss weights, peak learning rate and
//! network size. The default tuner is Bayesian optimization with a Gaussian
//! process surrogate and expected improvement; plain random search is kept
//! for comparison.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::net::{Architecture, NormConfig};
use crate::seed::derive_seed;
use crate::training::TrainConfig;

const INITIAL_BATCH: usize = 10;
const RANDOM_CANDIDATES: usize = 512;
const LOCAL_STARTS: usize = 8;
const LOCAL_STEPS: usize = 24;
/// Candidates drawn per point of the space-filling design.
const DESIGN_POOL: usize = 32;
const LENGTHSCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
const NOISES: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];
const EI_MARGIN: f64 = 0.01;

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub weights: LossWeights,
    pub max_lr: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
}

impl HyperConfig {
    pub fn architecture(&self, output_dim: usize, norm: NormConfig) -> Architecture {
        Architecture {
            hidden_layers: self.hidden_layers,
            hidden_units: self.hidden_units,
            output_dim,
            norm,
        }
    }

    /// `base` with this configuration's weights and learning rate.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            weights: self.weights,
            max_lr: self.max_lr,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Fixed loss weights in `(po, dom, mds, l2)` order; `None` is free.
    pub pinned: [Option<f64>; 4],
    /// Inclusive bounds of the log-uniform peak learning rate.
    pub lr_range: (f64, f64),
    pub layers: (usize, usize),
    pub units: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            pinned: [None; 4],
            lr_range: (1e-4, 1e-1),
            layers: (1, 3),
            units: (8, 64),
        }
    }
}

impl SearchSpace {
    /// Same space with the stress weight fixed at zero.
    pub fn without_mds(mut self) -> Self {
        self.pinned[2] = Some(0.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lr_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid(format!(
                "bad learning-rate range [{lo}, {hi}]"
            )));
        }
        if self.layers.0 > self.layers.1 {
            return Err(Error::invalid("layer range is empty"));
        }
        if self.units.0 == 0 || self.units.0 > self.units.1 {
            return Err(Error::invalid(
                "unit range must be non-empty and start at 1 or more",
            ));
        }
        let mut fixed = 0.0;
        for w in self.pinned.iter().flatten() {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                return Err(Error::invalid(format!("pinned weight {w} outside [0, 1]")));
            }
            fixed += w;
        }
        if fixed > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("pinned weights sum to {fixed} > 1")));
        }
        if self.free_weights().is_empty() && (fixed - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "all weights pinned but they do not sum to 1",
            ));
        }
        Ok(())
    }

    /// Whether `cfg` lies in this space.
    pub fn contains(&self, cfg: &HyperConfig) -> bool {
        let w = cfg.weights.to_array();
        cfg.weights.validate().is_ok()
            && self
                .pinned
                .iter()
                .zip(w)
                .all(|(p, v)| p.is_none_or(|p| p == v))
            && cfg.max_lr >= self.lr_range.0
            && cfg.max_lr <= self.lr_range.1
            && (self.layers.0..=self.layers.1).contains(&cfg.hidden_layers)
            && (self.units.0..=self.units.1).contains(&cfg.hidden_units)
    }

    fn free_weights(&self) -> Vec<usize> {
        (0..4).filter(|&i| self.pinned[i].is_none()).collect()
    }

    fn free_mass(&self) -> f64 {
        (1.0 - self.pinned.iter().flatten().sum::<f64>()).max(0.0)
    }

    /// Weights from pinned values plus free proportions summing to 1.
    fn compose_weights(&self, proportions: &[f64]) -> LossWeights {
        let free = self.free_weights();
        let mass = self.free_mass();
        let mut w = [0.0; 4];
        for (i, p) in self.pinned.iter().enumerate() {
            if let Some(p) = p {
                w[i] = *p;
            }
        }
        for (&i, &p) in free.iter().zip(proportions) {
            w[i] = p * mass;
        }
        // push any rounding residue onto the largest free weight
        if let Some(&k) = free.iter().max_by(|&&a, &&b| w[a].total_cmp(&w[b])) {
            let sum: f64 = w.iter().sum();
            w[k] = (w[k] + 1.0 - sum).max(0.0);
        }
        LossWeights {
            po: w[0],
            dom: w[1],
            mds: w[2],
            l2: w[3],
        }
    }

    fn proportions(&self, cfg: &HyperConfig) -> Vec<f64> {
        let w = cfg.weights.to_array();
        let free = self.free_weights();
        let total: f64 = free.iter().map(|&i| w[i]).sum();
        free.iter()
            .map(|&i| {
                if total > 0.0 {
                    w[i] / total
                } else {
                    1.0 / free.len() as f64
                }
            })
            .collect()
    }

    /// Normalized surrogate coordinates: an isometric chart of the free
    /// simplex, then log learning rate and the integer ranges scaled to [0, 1].
    pub fn encode(&self, cfg: &HyperConfig) -> Vec<f64> {
        let p = self.proportions(cfg);
        let mut out = Vec::with_capacity(p.len() + 2);
        let mut prefix = 0.0;
        for j in 1..p.len() {
            prefix += p[j - 1];
            let jf = j as f64;
            out.push((prefix - jf * p[j]) / (jf * (jf + 1.0)).sqrt());
        }
        let (lo, hi) = self.lr_range;
        if hi > lo {
            out.push((cfg.max_lr / lo).ln() / (hi / lo).ln());
        }
        for (v, (lo, hi)) in [
            (cfg.hidden_layers, self.layers),
            (cfg.hidden_units, self.units),
        ] {
            if hi > lo {
                out.push((v - lo) as f64 / (hi - lo) as f64);
            }
        }
        out
    }
}

/// Uniform draw from the space: flat Dirichlet on the free weights,
/// log-uniform learning rate, uniform integers.
pub fn sample_config<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> HyperConfig {
    let k = space.free_weights().len();
    let mut e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= total);
    let (lo, hi) = space.lr_range;
    let max_lr = if hi > lo {
        (lo.ln() + rng.random::<f64>() * (hi / lo).ln())
            .exp()
            .clamp(lo, hi)
    } else {
        lo
    };
    HyperConfig {
        weights: space.compose_weights(&e),
        max_lr,
        hidden_layers: rng.random_range(space.layers.0..=space.layers.1),
        hidden_units: rng.random_range(space.units.0..=space.units.1),
    }
}

/// Random neighbour of `cfg`; `scale` in (0, 1] sets the step size.
fn perturb<R: Rng + ?Sized>(
    space: &SearchSpace,
    cfg: &HyperConfig,
    scale: f64,
    rng: &mut R,
) -> HyperConfig {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let mut p = space.proportions(cfg);
    for v in p.iter_mut() {
        *v = (*v).max(1e-6) * (scale * normal()).exp();
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let (lo, hi) = space.lr_range;
    let log_lr = cfg.max_lr.ln() + scale * (hi / lo).ln() * 0.5 * normal();
    let step = |v: usize, (lo, hi): (usize, usize), z: f64| {
        let moved = v as f64 + scale * (hi - lo) as f64 * 0.5 * z;
        (moved.round().max(lo as f64) as usize).min(hi)
    };
    let (zl, zu) = (normal(), normal());
    HyperConfig {
        weights: space.compose_weights(&p),
        max_lr: log_lr.exp().clamp(lo, hi),
        hidden_layers: step(cfg.hidden_layers, space.layers, zl),
        hidden_units: step(cfg.hidden_units, space.units, zu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerKind {
    #[default]
    Bayesian,
    Random,
}

impl std::str::FromStr for TunerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bayesian" | "bo" => Ok(TunerKind::Bayesian),
            "random" => Ok(TunerKind::Random),
            _ => Err(Error::invalid(format!("unknown tuner '{s}'"))),
        }
    }
}

/// What an objective learns about the trial it is evaluating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialContext {
    pub index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: HyperConfig,
    pub score: f64,
    pub wall_clock: Duration,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome<T> {
    pub best_index: usize,
    pub best_config: HyperConfig,
    pub best_score: f64,
    /// Whatever the objective returned alongside the best score.
    pub best_payload: T,
    pub trials: Vec<Trial>,
}

/// Runs exactly `budget` objective evaluations and returns the best one
/// (ties go to the earliest). Deterministic for a fixed seed; the initial
/// design is evaluated in parallel.
pub fn tune<T, F>(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    kind: TunerKind,
    objective: F,
) -> Result<TuneOutcome<T>>
where
    T: Send,
    F: Fn(&HyperConfig, TrialContext) -> Result<(f64, T)> + Sync,
{
    space.validate()?;
    if budget == 0 {
        return Err(Error::invalid("tuning budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = match kind {
        TunerKind::Bayesian => space_filling(space, INITIAL_BATCH.min(budget), &mut rng),
        TunerKind::Random => (0..budget)
            .map(|_| sample_config(space, &mut rng))
            .collect(),
    };

    let run = |index: usize, config: HyperConfig| -> Result<(Trial, T)> {
        let trial_seed = derive_seed(seed, index as u64);
        let start = Instant::now();
        let (score, payload) = objective(
            &config,
            TrialContext {
                index,
                seed: trial_seed,
            },
        )?;
        if !score.is_finite() {
            return Err(Error::invalid(format!(
                "objective returned {score} for trial {index}"
            )));
        }
        let trial = Trial {
            index,
            config,
            score,
            wall_clock: start.elapsed(),
            seed: trial_seed,
        };
        Ok((trial, payload))
    };

    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(usize, T)> = None;
    let mut record = |trials: &mut Vec<Trial>, (trial, payload): (Trial, T)| {
        let better = match &best {
            None => true,
            Some((i, _)) => trial.score > trials[*i].score,
        };
        if better {
            best = Some((trial.index, payload));
        }
        trials.push(trial);
    };

    let first = initial
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| run(i, c))
        .collect::<Result<Vec<_>>>()?;
    for r in first {
        record(&mut trials, r);
    }
    while trials.len() < budget {
        let next = propose(space, &trials, &mut rng);
        let r = run(trials.len(), next)?;
        record(&mut trials, r);
    }

    let (best_index, best_payload) = best.expect("budget is at least 1");
    Ok(TuneOutcome {
        best_index,
        best_config: trials[best_index].config,
        best_score: trials[best_index].score,
        best_payload,
        trials,
    })
}

/// Greedy maximin design: each point is the candidate farthest from those
/// already chosen.
fn space_filling<R: Rng + ?Sized>(space: &SearchSpace, n: usize, rng: &mut R) -> Vec<HyperConfig> {
    let mut chosen: Vec<HyperConfig> = Vec::with_capacity(n);
    let mut encoded: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(f64, HyperConfig, Vec<f64>)> = None;
        for _ in 0..DESIGN_POOL {
            let c = sample_config(space, rng);
            let e = space.encode(&c);
            let gap = encoded
                .iter()
                .map(|o| sq_dist(o, &e))
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(g, _, _)| gap > *g) {
                best = Some((gap, c, e));
            }
        }
        let (_, c, e) = best.expect("pool is non-empty");
        chosen.push(c);
        encoded.push(e);
    }
    chosen
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Next configuration: expected-improvement maximum over random candidates
/// refined by local search from the most promising ones.
fn propose<R: Rng + ?Sized>(space: &SearchSpace, trials: &[Trial], rng: &mut R) -> HyperConfig {
    let x: Vec<Vec<f64>> = trials.iter().map(|t| space.encode(&t.config)).collect();
    let y: Vec<f64> = trials.iter().map(|t| t.score).collect();
    let gp = match Gp::fit(&x, &y) {
        Some(gp) => gp,
        None => return sample_config(space, rng),
    };
    let acquisition = |c: &HyperConfig| gp.expected_improvement(&space.encode(c));

    let mut pool: Vec<HyperConfig> = (0..RANDOM_CANDIDATES)
        .map(|_| sample_config(space, rng))
        .collect();
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials[b].score.total_cmp(&trials[a].score));
    pool.extend(order.iter().take(LOCAL_STARTS).map(|&i| trials[i].config));
    let mut scored: Vec<(f64, HyperConfig)> =
        pool.into_iter().map(|c| (acquisition(&c), c)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best = scored[0];
    for &(start_ei, start) in scored.iter().take(LOCAL_STARTS) {
        let (mut cur_ei, mut cur) = (start_ei, start);
        let mut scale = 0.3;
        for _ in 0..LOCAL_STEPS {
            let cand = perturb(space, &cur, scale, rng);
            let ei = acquisition(&cand);
            if ei > cur_ei {
                cur_ei = ei;
                cur = cand;
            } else {
                scale *= 0.8;
            }
        }
        if cur_ei > best.0 {
            best = (cur_ei, cur);
        }
    }
    best.1
}

/// Zero-mean GP on standardized scores with a squared-exponential kernel;
/// lengthscale and noise picked from a grid by marginal likelihood.
struct Gp {
    x: Vec<Vec<f64>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    lengthscale: f64,
    best: f64,
}

impl Gp {
    fn fit(x: &[Vec<f64>], y: &[f64]) -> Option<Gp> {
        let n = y.len();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd > 1e-12 { sd } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - mean) / sd));
        let d2 = DMatrix::from_fn(n, n, |i, j| sq_dist(&x[i], &x[j]));

        let mut best: Option<(f64, Gp)> = None;
        for &ls in &LENGTHSCALES {
            for &noise in &NOISES {
                let k = DMatrix::from_fn(n, n, |i, j| {
                    (-d2[(i, j)] / (2.0 * ls * ls)).exp() + if i == j { noise } else { 0.0 }
                });
                let Some(chol) = k.cholesky() else { continue };
                let alpha = chol.solve(&ys);
                let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
                let lml = -0.5 * ys.dot(&alpha) - log_det;
                if !lml.is_finite() {
                    continue;
                }
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    let gp = Gp {
                        x: x.to_vec(),
                        chol,
                        alpha,
                        lengthscale: ls,
                        best: ys.max(),
                    };
                    best = Some((lml, gp));
                }
            }
        }
        best.map(|(_, gp)| gp)
    }

    fn predict(&self, q: &[f64]) -> (f64, f64) {
        let ls2 = 2.0 * self.lengthscale * self.lengthscale;
        let k = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| (-sq_dist(xi, q) / ls2).exp()),
        );
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (1.0 - k.dot(&v)).max(1e-12);
        (mean, var.sqrt())
    }

    fn expected_improvement(&self, q: &[f64]) -> f64 {
        let (mu, sd) = self.predict(q);
        let gain = mu - self.best - EI_MARGIN;
        let z = gain / sd;
        let n = Normal::standard();
        gain * n.cdf(z) + sd * n.pdf(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn samples_lie_in_space() {
        let space = SearchSpace::default();
        let mut r = rng(1);
        for _ in 0..2000 {
            let c = sample_config(&space, &mut r);
            assert!(space.contains(&c), "{c:?}");
            assert!((c.weights.to_array().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!((1e-4..=1e-1).contains(&c.max_lr));
        }
    }

    #[test]
    fn pinned_weight_is_exact() {
        let space = SearchSpace::default().without_mds();
        let mut r = rng(2);
        for _ in 0..500 {
            let c = sample_config(&space, &mut r);
            assert_eq!(c.weights.mds, 0.0);
            let rest = c.weights.po + c.weights.dom + c.weights.l2;
            assert!((rest - 1.0).abs() <= 1e-9);
            let p = perturb(&space, &c, 0.5, &mut r);
            assert_eq!(p.weights.mds, 0.0);
            assert!(space.contains(&p));
        }
    }

    #[test]
    fn invalid_spaces_rejected() {
        let space = |s: SearchSpace| s.validate();
        assert!(space(SearchSpace {
            lr_range: (0.1, 0.01),
            ..Default::default()
        })
        .is_err());
        assert!(space(SearchSpace {
            pinned: [Some(0.7), Some(0.7), None, None],
            ..Default::default()
        })
        .is_err());
        let mut s = SearchSpace {
            pinned: [Some(0.5), Some(0.2), Some(0.2), Some(0.0)],
            ..Default::default()
        };
        assert!(s.validate().is_err());
        s.pinned[3] = Some(0.1);
        assert!(s.validate().is_ok());
        assert!(space(SearchSpace {
            units: (0, 4),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn simplex_chart_is_isometric() {
        let space = SearchSpace::default();
        let mut r = rng(3);
        for _ in 0..100 {
            let a = sample_config(&space, &mut r);
            let b = sample_config(&space, &mut r);
            let ea = space.encode(&a);
            let eb = space.encode(&b);
            let chart: f64 = sq_dist(&ea[..3], &eb[..3]);
            let direct = sq_dist(&a.weights.to_array(), &b.weights.to_array());
            assert!((chart - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_one_returns_the_single_trial() {
        let out = tune(
            &SearchSpace::default(),
            1,
            5,
            TunerKind::Bayesian,
            |c, _| Ok((c.max_lr, *c)),
        )
        .unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best_config, out.trials[0].config);
        assert_eq!(out.best_payload, out.best_config);
    }

    #[test]
    fn exact_budget_and_determinism() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        for kind in [TunerKind::Bayesian, TunerKind::Random] {
            let calls = AtomicUsize::new(0);
            let f = |c: &HyperConfig, _: TrialContext| {
                calls.fetch_add(1, Ordering::SeqCst);
                Ok((c.weights.po - (c.max_lr.ln() + 5.0).abs(), ()))
            };
            let a = tune(&SearchSpace::default(), 14, 7, kind, f).unwrap();
            assert_eq!(calls.load(Ordering::SeqCst), 14);
            let b = tune(&SearchSpace::default(), 14, 7, kind, f).unwrap();
            let strip = |t: &[Trial]| {
                t.iter()
                    .map(|t| (t.index, t.config, t.score, t.seed))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&a.trials), strip(&b.trials));
            let max = a
                .trials
                .iter()
                .map(|t| t.score)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(a.best_score, max);
            let earliest = a.trials.iter().position(|t| t.score == max).unwrap();
            assert_eq!(a.best_index, earliest);
        }
    }

    #[test]
    fn ties_go_to_the_earliest_trial() {
        let out = tune(
            &SearchSpace::default(),
            12,
            1,
            TunerKind::Bayesian,
            |_, ctx| Ok((0.5, ctx.index)),
        )
        .unwrap();
        assert_eq!(out.best_index, 0);
        assert_eq!(out.best_payload, 0);
    }

    #[test]
    fn errors_and_non_finite_scores_propagate() {
        assert!(
            tune(&SearchSpace::default(), 0, 1, TunerKind::Random, |_, _| Ok(
                (0.0, ())
            ))
            .is_err()
        );
        assert!(
            tune(&SearchSpace::default(), 3, 1, TunerKind::Random, |_, _| Ok(
                (f64::NAN, ())
            ))
            .is_err()
        );
    }

    /// Known optimum in (log learning rate, first weight) with every other
    /// coordinate irrelevant.
    fn synthetic(space: &SearchSpace, c: &HyperConfig) -> f64 {
        let (lo, hi) = space.lr_range;
        let u = (c.max_lr / lo).ln() / (hi / lo).ln();
        1.0 - ((u - 0.7).powi(2) + (c.weights.po - 0.6).powi(2)).sqrt()
    }

    #[test]
    fn bayesian_search_finds_synthetic_optimum() {
        let space = SearchSpace {
            pinned: [None, Some(0.2), Some(0.0), None],
            layers: (1, 1),
            units: (8, 8),
            ..SearchSpace::default()
        };
        let out = tune(&space, 60, 11, TunerKind::Bayesian, |c, _| {
            Ok((synthetic(&space, c), ()))
        })
        .unwrap();
        assert!(out.best_score >= 0.9, "best {}", out.best_score);
        assert!(out.trials.iter().all(|t| space.contains(&t.config)));
    }

    proptest! {
        #[test]
        fn perturbation_stays_in_space(seed in any::<u64>(), scale in 0.01f64..1.0) {
            let space = SearchSpace::default();
            let mut r = rng(seed);
            let c = sample_config(&space, &mut r);
            let p = perturb(&space, &c, scale, &mut r);
            prop_assert!(space.contains(&p));
        }
    }
}
