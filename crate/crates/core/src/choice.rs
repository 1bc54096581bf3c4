//! Choice tasks, choice masks and the dominance machinery that turns a set
//! of embedded points into a predicted choice set.
//!
//! Dominance is oriented for maximization: larger utilities are better.
//! Problems that are naturally minimized (the benchmark suites) negate their
//! objective vectors before calling [`pareto_front`].

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetworkParams;

/// One query set: `m` objects, each described by `d` real features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceTask {
    id: String,
    features: Array2<f64>,
}

impl ChoiceTask {
    pub fn new(id: impl Into<String>, features: Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid(format!(
                "choice task needs at least one object and one feature, got {}x{}",
                features.nrows(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("choice task features must be finite"));
        }
        Ok(ChoiceTask {
            id: id.into(),
            features,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of objects `m`.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn object(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }
}

/// Binary encoding of a choice set over the objects of a task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceMask(Vec<bool>);

impl ChoiceMask {
    pub fn new(bits: Vec<bool>) -> Self {
        ChoiceMask(bits)
    }

    /// Builds a mask from 0/1 integers; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid(format!(
                    "choice mask entries must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ChoiceMask)
    }

    pub fn zeros(len: usize) -> Self {
        ChoiceMask(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        ChoiceMask(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }
}

impl From<Vec<bool>> for ChoiceMask {
    fn from(bits: Vec<bool>) -> Self {
        ChoiceMask(bits)
    }
}

impl fmt::Display for ChoiceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Points of a task mapped into the `d'`-dimensional utility space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Array2<f64>);

impl Embedding {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding values must be finite"));
        }
        Ok(Embedding(points))
    }

    /// Convenience constructor from row vectors.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("embedding rows have unequal length"));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let points = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Embedding::new(points)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Provenance recorded alongside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem: String,
    pub seed: u64,
    /// Objects per task.
    pub task_size: usize,
    pub feature_dim: usize,
}

/// Observed choices `(task, mask)`. All tasks share the same `m` and `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pairs: Vec<(ChoiceTask, ChoiceMask)>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(pairs: Vec<(ChoiceTask, ChoiceMask)>, meta: DatasetMeta) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("dataset must contain at least one task"));
        }
        for (n, (task, mask)) in pairs.iter().enumerate() {
            if mask.len() != task.len() {
                return Err(Error::invalid(format!(
                    "task {n}: mask length {} does not match task size {}",
                    mask.len(),
                    task.len()
                )));
            }
            if task.len() != meta.task_size || task.dim() != meta.feature_dim {
                return Err(Error::invalid(format!(
                    "task {n}: shape {}x{} differs from dataset shape {}x{}",
                    task.len(),
                    task.dim(),
                    meta.task_size,
                    meta.feature_dim
                )));
            }
        }
        Ok(Dataset { pairs, meta })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(ChoiceTask, ChoiceMask)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ChoiceTask, ChoiceMask)> {
        self.pairs.iter()
    }

    pub fn task_size(&self) -> usize {
        self.meta.task_size
    }

    pub fn feature_dim(&self) -> usize {
        self.meta.feature_dim
    }

    /// Copies the tasks at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let pairs = indices
            .iter()
            .map(|&i| {
                self.pairs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("task index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(pairs, self.meta.clone())
    }

    /// Fraction of objects that are chosen, pooled over all tasks.
    pub fn positive_rate(&self) -> f64 {
        let ones: usize = self.pairs.iter().map(|(_, c)| c.count_ones()).sum();
        let total: usize = self.pairs.iter().map(|(_, c)| c.len()).sum();
        ones as f64 / total as f64
    }

    /// Number of tasks in which every object is chosen.
    pub fn all_chosen_tasks(&self) -> usize {
        self.pairs
            .iter()
            .filter(|(_, c)| c.count_ones() == c.len())
            .count()
    }
}

/// `a` dominates `b` when it is at least as large in every coordinate and
/// strictly larger in at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "dominance needs equal non-zero dimensions, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a.iter().copied(), b.iter().copied()))
}

pub(crate) fn dominates_unchecked(
    a: impl Iterator<Item = f64>,
    b: impl Iterator<Item = f64>,
) -> bool {
    let mut strict = false;
    for (x, y) in a.zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Marks the rows of `z` not dominated by any other row.
pub fn pareto_front(z: ArrayView2<'_, f64>) -> Result<ChoiceMask> {
    let m = z.nrows();
    if m == 0 {
        return Err(Error::invalid("pareto front of an empty point set"));
    }
    if z.ncols() == 0 {
        return Err(Error::invalid("points must have at least one coordinate"));
    }
    let bits = (0..m)
        .map(|i| {
            !(0..m).any(|j| {
                j != i && dominates_unchecked(z.row(j).iter().copied(), z.row(i).iter().copied())
            })
        })
        .collect();
    Ok(ChoiceMask(bits))
}

/// Predicted choice set `P_φ(Q)`: the Pareto-optimal objects of `task`
/// under the embedding defined by `params` (inference mode).
pub fn predict_choice(task: &ChoiceTask, params: &NetworkParams) -> Result<ChoiceMask> {
    let z = params.infer(task.features())?;
    pareto_front(z.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 1.0], &[0.0, 0.0]).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 0.0], &[0.0, 1.0]).unwrap());
        assert!(dominates(&[1.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn front_examples() {
        let single = pareto_front(array![[3.0, 7.0]].view()).unwrap();
        assert_eq!(single.to_bits(), vec![1]);

        let z = array![[1.0, 1.0], [0.0, 2.0], [0.0, 0.0], [2.0, 0.0]];
        assert_eq!(pareto_front(z.view()).unwrap().to_bits(), vec![1, 1, 0, 1]);

        let dup = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(pareto_front(dup.view()).unwrap().to_bits(), vec![1, 1]);

        let one_dim = array![[5.0], [5.0], [3.0]];
        assert_eq!(
            pareto_front(one_dim.view()).unwrap().to_bits(),
            vec![1, 1, 0]
        );
    }

    #[test]
    fn empty_front_is_rejected() {
        let z = Array2::<f64>::zeros((0, 2));
        assert!(pareto_front(z.view()).is_err());
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(ChoiceMask::from_bits(&[0, 1, 2]).is_err());
        assert_eq!(ChoiceMask::from_bits(&[0, 1]).unwrap().to_string(), "01");
    }

    #[test]
    fn task_and_dataset_invariants() {
        assert!(ChoiceTask::new("t", array![[f64::NAN]]).is_err());
        assert!(ChoiceTask::new("t", Array2::zeros((0, 2))).is_err());
        let task = ChoiceTask::new("t", array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let meta = DatasetMeta {
            problem: "x".into(),
            seed: 0,
            task_size: 2,
            feature_dim: 2,
        };
        assert!(Dataset::new(vec![], meta.clone()).is_err());
        assert!(Dataset::new(vec![(task.clone(), ChoiceMask::ones(3))], meta.clone()).is_err());
        // empty choice sets are accepted
        let ds = Dataset::new(vec![(task, ChoiceMask::zeros(2))], meta).unwrap();
        assert_eq!(ds.positive_rate(), 0.0);
        assert!(ds.subset(&[1]).is_err());
    }

    fn points(max_m: usize, max_d: usize) -> impl Strategy<Value = Array2<f64>> {
        (1..=max_m, 1..=max_d).prop_flat_map(|(m, d)| {
            // small integer grid so ties and duplicates are common
            proptest::collection::vec(-3i32..=3, m * d).prop_map(move |v| {
                Array2::from_shape_vec((m, d), v.into_iter().map(f64::from).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn antisymmetric_and_transitive(
            a in proptest::collection::vec(-2i32..=2, 3),
            b in proptest::collection::vec(-2i32..=2, 3),
            c in proptest::collection::vec(-2i32..=2, 3),
        ) {
            let f = |v: &Vec<i32>| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
            let (a, b, c) = (f(&a), f(&b), f(&c));
            let ab = dominates(&a, &b).unwrap();
            let ba = dominates(&b, &a).unwrap();
            prop_assert!(!(ab && ba));
            if ab && dominates(&b, &c).unwrap() {
                prop_assert!(dominates(&a, &c).unwrap());
            }
        }

        #[test]
        fn front_is_never_empty(z in points(12, 4)) {
            prop_assert!(pareto_front(z.view()).unwrap().count_ones() >= 1);
        }

        #[test]
        fn front_invariant_under_monotone_maps(z in points(10, 3)) {
            let mapped = z.mapv(|v| (v * 0.7).exp() + v.powi(3));
            prop_assert_eq!(pareto_front(z.view()).unwrap(), pareto_front(mapped.view()).unwrap());
        }

        #[test]
        fn front_is_permutation_equivariant(z in points(10, 3), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..z.nrows()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = z.select(ndarray::Axis(0), &perm);
            let front = pareto_front(z.view()).unwrap();
            let permuted_front = pareto_front(permuted.view()).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert_eq!(permuted_front.get(new), front.get(old));
            }
        }

        #[test]
        fn adding_a_dominated_point_keeps_existing_bits(z in points(10, 3), pick in any::<prop::sample::Index>()) {
            let front = pareto_front(z.view()).unwrap();
            let members: Vec<usize> = (0..z.nrows()).filter(|&i| front.get(i)).collect();
            let anchor = members[pick.index(members.len())];
            let mut extra = z.row(anchor).to_owned();
            extra[0] -= 1.0;
            let mut grown = z.clone();
            grown.push_row(extra.view()).unwrap();
            let grown_front = pareto_front(grown.view()).unwrap();
            for i in 0..z.nrows() {
                prop_assert_eq!(grown_front.get(i), front.get(i));
            }
            prop_assert!(!grown_front.get(z.nrows()));
        }
    }
}
