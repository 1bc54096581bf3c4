//! Synthetic choice data from multi-objective test problems.
//!
//! Each task samples `m` points from a problem's decision space; the chosen
//! objects are the ones whose objective vectors are Pareto-optimal under
//! minimization among the `m`.
//!
//! Supported: DTLZ1–7 with 6 variables and 5 objectives, ZDT1–4 and ZDT6
//! with 6 variables, ZDT5 with 35 bits (one 30-bit and one 5-bit block), and
//! TP, the two-parabola problem on `[0, 1]²`:
//!
//! ```text
//! f1(x) = (x1 − 1)² + x2²,   f2(x) = (x1 + 1)² + x2²
//! ```
//!
//! Features are always sampled from the unit cube (or fair bits for ZDT5).
//! ZDT4's published domain `x_i ∈ [−5, 5]` for `i ≥ 2` is reached by mapping
//! `x ↦ 10x − 5` inside the objective function.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice::{pareto_front, ChoiceMask, ChoiceTask, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Objective count for the DTLZ family.
pub const DTLZ_OBJECTIVES: usize = 5;
/// Continuous decision variables for DTLZ and ZDT (except ZDT5).
pub const CONTINUOUS_FEATURES: usize = 6;
pub const ZDT5_BITS: usize = 35;
const ZDT5_HEAD_BITS: usize = 30;
const DTLZ4_ALPHA: i32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Problem {
    Dtlz1,
    Dtlz2,
    Dtlz3,
    Dtlz4,
    Dtlz5,
    Dtlz6,
    Dtlz7,
    Zdt1,
    Zdt2,
    Zdt3,
    Zdt4,
    Zdt5,
    Zdt6,
    Tp,
}

impl Problem {
    pub const ALL: [Problem; 14] = [
        Problem::Dtlz1,
        Problem::Dtlz2,
        Problem::Dtlz3,
        Problem::Dtlz4,
        Problem::Dtlz5,
        Problem::Dtlz6,
        Problem::Dtlz7,
        Problem::Zdt1,
        Problem::Zdt2,
        Problem::Zdt3,
        Problem::Zdt4,
        Problem::Zdt5,
        Problem::Zdt6,
        Problem::Tp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Dtlz1 => "DTLZ1",
            Problem::Dtlz2 => "DTLZ2",
            Problem::Dtlz3 => "DTLZ3",
            Problem::Dtlz4 => "DTLZ4",
            Problem::Dtlz5 => "DTLZ5",
            Problem::Dtlz6 => "DTLZ6",
            Problem::Dtlz7 => "DTLZ7",
            Problem::Zdt1 => "ZDT1",
            Problem::Zdt2 => "ZDT2",
            Problem::Zdt3 => "ZDT3",
            Problem::Zdt4 => "ZDT4",
            Problem::Zdt5 => "ZDT5",
            Problem::Zdt6 => "ZDT6",
            Problem::Tp => "TP",
        }
    }

    pub fn spec(self) -> ProblemSpec {
        let (feature_dim, objective_dim, domain) = match self {
            Problem::Dtlz1
            | Problem::Dtlz2
            | Problem::Dtlz3
            | Problem::Dtlz4
            | Problem::Dtlz5
            | Problem::Dtlz6
            | Problem::Dtlz7 => (
                CONTINUOUS_FEATURES,
                DTLZ_OBJECTIVES,
                FeatureDomain::UnitCube,
            ),
            Problem::Zdt5 => (ZDT5_BITS, 2, FeatureDomain::Binary),
            Problem::Tp => (2, 2, FeatureDomain::UnitCube),
            _ => (CONTINUOUS_FEATURES, 2, FeatureDomain::UnitCube),
        };
        ProblemSpec {
            problem: self,
            feature_dim,
            objective_dim,
            domain,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == upper)
            .ok_or_else(|| Error::invalid(format!("unknown problem {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureDomain {
    UnitCube,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemSpec {
    pub problem: Problem,
    pub feature_dim: usize,
    pub objective_dim: usize,
    pub domain: FeatureDomain,
}

impl ProblemSpec {
    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::invalid(format!(
                "{} takes {} features, got {}",
                self.problem,
                self.feature_dim,
                x.len()
            )));
        }
        let ok = match self.domain {
            FeatureDomain::UnitCube => x.iter().all(|v| (0.0..=1.0).contains(v)),
            FeatureDomain::Binary => x.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        if !ok {
            return Err(Error::invalid(format!(
                "features lie outside the {} domain",
                self.problem
            )));
        }
        Ok(())
    }
}

/// Objective values of `x` (all problems are minimized).
pub fn evaluate_objectives(spec: &ProblemSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.check_domain(x)?;
    let m = spec.objective_dim;
    Ok(match spec.problem {
        Problem::Dtlz1 => dtlz1(x, m),
        Problem::Dtlz2 => spherical(&angles(&x[..m - 1]), 1.0 + sphere_g(&x[m - 1..])),
        Problem::Dtlz3 => spherical(&angles(&x[..m - 1]), 1.0 + rastrigin_g(&x[m - 1..])),
        Problem::Dtlz4 => {
            let warped: Vec<f64> = x[..m - 1].iter().map(|v| v.powi(DTLZ4_ALPHA)).collect();
            spherical(&angles(&warped), 1.0 + sphere_g(&x[m - 1..]))
        }
        Problem::Dtlz5 => degenerate(x, m, sphere_g(&x[m - 1..])),
        Problem::Dtlz6 => degenerate(x, m, x[m - 1..].iter().map(|v| v.powf(0.1)).sum()),
        Problem::Dtlz7 => dtlz7(x, m),
        Problem::Zdt1 => zdt(x[0], linear_g(x), |r| 1.0 - r.sqrt()),
        Problem::Zdt2 => zdt(x[0], linear_g(x), |r| 1.0 - r * r),
        Problem::Zdt3 => {
            let f1 = x[0];
            zdt(f1, linear_g(x), |r| {
                1.0 - r.sqrt() - r * (10.0 * PI * f1).sin()
            })
        }
        Problem::Zdt4 => {
            let g = 1.0
                + 10.0 * (x.len() - 1) as f64
                + x[1..]
                    .iter()
                    .map(|v| {
                        let y = 10.0 * v - 5.0;
                        y * y - 10.0 * (4.0 * PI * y).cos()
                    })
                    .sum::<f64>();
            zdt(x[0], g, |r| 1.0 - r.sqrt())
        }
        Problem::Zdt5 => {
            let ones = |bits: &[f64]| bits.iter().filter(|&&b| b == 1.0).count();
            let f1 = 1.0 + ones(&x[..ZDT5_HEAD_BITS]) as f64;
            let u = ones(&x[ZDT5_HEAD_BITS..]);
            let g = if u < 5 { 2.0 + u as f64 } else { 1.0 };
            vec![f1, g / f1]
        }
        Problem::Zdt6 => {
            let f1 = 1.0 - (-4.0 * x[0]).exp() * (6.0 * PI * x[0]).sin().powi(6);
            let mean = x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
            zdt(f1, 1.0 + 9.0 * mean.powf(0.25), |r| 1.0 - r * r)
        }
        Problem::Tp => {
            let (a, b) = (x[0], x[1]);
            vec![(a - 1.0).powi(2) + b * b, (a + 1.0).powi(2) + b * b]
        }
    })
}

fn zdt(f1: f64, g: f64, h: impl Fn(f64) -> f64) -> Vec<f64> {
    vec![f1, g * h(f1 / g)]
}

fn linear_g(x: &[f64]) -> f64 {
    1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64
}

fn sphere_g(tail: &[f64]) -> f64 {
    tail.iter().map(|v| (v - 0.5).powi(2)).sum()
}

fn rastrigin_g(tail: &[f64]) -> f64 {
    100.0
        * (tail.len() as f64
            + tail
                .iter()
                .map(|v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos())
                .sum::<f64>())
}

fn angles(position: &[f64]) -> Vec<f64> {
    position.iter().map(|v| v * FRAC_PI_2).collect()
}

/// `f_j = scale · Π_{i<M−j} cos θ_i · sin θ_{M−j}` (no sine for the first objective).
fn spherical(theta: &[f64], scale: f64) -> Vec<f64> {
    let m = theta.len() + 1;
    (0..m)
        .map(|j| {
            let cosines: f64 = theta[..m - 1 - j].iter().map(|t| t.cos()).product();
            let sine = if j == 0 { 1.0 } else { theta[m - 1 - j].sin() };
            scale * cosines * sine
        })
        .collect()
}

fn dtlz1(x: &[f64], m: usize) -> Vec<f64> {
    let scale = 0.5 * (1.0 + rastrigin_g(&x[m - 1..]));
    (0..m)
        .map(|j| {
            let prod: f64 = x[..m - 1 - j].iter().product();
            let last = if j == 0 { 1.0 } else { 1.0 - x[m - 1 - j] };
            scale * prod * last
        })
        .collect()
}

fn degenerate(x: &[f64], m: usize, g: f64) -> Vec<f64> {
    let theta: Vec<f64> = x[..m - 1]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == 0 {
                v * FRAC_PI_2
            } else {
                PI / (4.0 * (1.0 + g)) * (1.0 + 2.0 * g * v)
            }
        })
        .collect();
    spherical(&theta, 1.0 + g)
}

fn dtlz7(x: &[f64], m: usize) -> Vec<f64> {
    let tail = &x[m - 1..];
    let g = 1.0 + 9.0 / tail.len() as f64 * tail.iter().sum::<f64>();
    let mut f: Vec<f64> = x[..m - 1].to_vec();
    let h = m as f64
        - f.iter()
            .map(|&fi| fi / (1.0 + g) * (1.0 + (3.0 * PI * fi).sin()))
            .sum::<f64>();
    f.push((1.0 + g) * h);
    f
}

/// Uniform draw from the problem's feature domain.
pub fn sample_object(spec: &ProblemSpec, rng: &mut impl Rng) -> Vec<f64> {
    match spec.domain {
        FeatureDomain::UnitCube => (0..spec.feature_dim).map(|_| rng.random::<f64>()).collect(),
        FeatureDomain::Binary => (0..spec.feature_dim)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Samples `m` objects and labels the minimization-Pareto-optimal ones.
pub fn generate_task(
    spec: &ProblemSpec,
    m: usize,
    rng: &mut impl Rng,
    id: impl Into<String>,
) -> Result<(ChoiceTask, ChoiceMask)> {
    if m == 0 {
        return Err(Error::invalid("tasks need at least one object"));
    }
    let mut features = Array2::zeros((m, spec.feature_dim));
    let mut negated = Array2::zeros((m, spec.objective_dim));
    for i in 0..m {
        let x = sample_object(spec, rng);
        let f = evaluate_objectives(spec, &x)?;
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        for (k, v) in f.iter().enumerate() {
            negated[[i, k]] = -v;
        }
    }
    let mask = pareto_front(negated.view())?;
    Ok((ChoiceTask::new(id, features)?, mask))
}

/// Seed of task `index` within a dataset generated from `seed`.
pub fn task_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, index)
}

/// `n_tasks` independent tasks. Task `i` is drawn from a ChaCha8 stream
/// seeded with [`task_seed`]`(seed, i)` (SplitMix64 of `seed + (i + 1) · φ64`),
/// so the result does not depend on generation order.
pub fn generate_dataset(
    spec: &ProblemSpec,
    n_tasks: usize,
    m: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_tasks == 0 {
        return Err(Error::invalid("n_tasks must be at least 1"));
    }
    let pairs = (0..n_tasks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, i as u64));
            generate_task(spec, m, &mut rng, format!("{}-{seed}-{i}", spec.problem))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        pairs,
        DatasetMeta {
            problem: spec.problem.name().to_string(),
            seed,
            task_size: m,
            feature_dim: spec.feature_dim,
        },
    )
}
