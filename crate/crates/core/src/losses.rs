//! The Pareto-embedding loss: two hinge terms that encode the choice set as
//! the Pareto front, a stress term that keeps object-space distances, and a
//! norm penalty that pins down the otherwise shift-invariant solution.
//!
//! Gradients are subgradients of the piecewise-linear compositions. A
//! `min`/`max` selection routes the gradient to the first index achieving the
//! extremum, and a hinge `max(0, t)` has zero gradient at `t = 0`.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::choice::ChoiceMask;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Convex-combination weights of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub po: f64,
    pub dom: f64,
    pub mds: f64,
    pub l2: f64,
}

impl LossWeights {
    pub fn new(po: f64, dom: f64, mds: f64, l2: f64) -> Result<Self> {
        let w = LossWeights { po, dom, mds, l2 };
        w.validate()?;
        Ok(w)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        LossWeights::new(a[0], a[1], a[2], a[3])
    }

    pub fn uniform() -> Self {
        LossWeights {
            po: 0.25,
            dom: 0.25,
            mds: 0.25,
            l2: 0.25,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.po, self.dom, self.mds, self.l2]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and non-negative, got {a:?}"
            )));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "loss weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::uniform()
    }
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub po: f64,
    pub dom: f64,
    pub mds: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn combine(po: f64, dom: f64, mds: f64, l2: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            po,
            dom,
            mds,
            l2,
            total: w.po * po + w.dom * dom + w.mds * mds + w.l2 * l2,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.po, self.dom, self.mds, self.l2, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &LossBreakdown) {
        self.po += other.po;
        self.dom += other.dom;
        self.mds += other.mds;
        self.l2 += other.l2;
        self.total += other.total;
    }

    pub fn scaled(&self, factor: f64) -> LossBreakdown {
        LossBreakdown {
            po: self.po * factor,
            dom: self.dom * factor,
            mds: self.mds * factor,
            l2: self.l2 * factor,
            total: self.total * factor,
        }
    }
}

/// Which points may serve as the dominator of a non-chosen point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomScope {
    /// Every other point of the task.
    #[default]
    AllPoints,
    /// Only chosen points. Falls back to all points when nothing is chosen.
    ChosenOnly,
}

/// Loss weights plus term options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwiseLoss {
    pub weights: LossWeights,
    #[serde(default)]
    pub dom_scope: DomScope,
}

impl PairwiseLoss {
    pub fn new(weights: LossWeights) -> Self {
        PairwiseLoss {
            weights,
            dom_scope: DomScope::AllPoints,
        }
    }

    pub fn evaluate(
        &self,
        q: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
        c: &ChoiceMask,
    ) -> Result<LossBreakdown> {
        check_shapes(Some(q), z, Some(c))?;
        let po = po_term(z, c, None);
        let dom = dom_term(z, c, self.dom_scope, None)?;
        let mds = mds_term(q, z, None);
        let l2 = l2_term(z, None);
        Ok(LossBreakdown::combine(po, dom, mds, l2, &self.weights))
    }

    /// Loss value and its gradient with respect to `z`.
    pub fn value_and_grad(
        &self,
        q: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
        c: &ChoiceMask,
    ) -> Result<(LossBreakdown, Array2<f64>)> {
        let mut grad = Array2::zeros(z.raw_dim());
        let loss = self.accumulate_grad(q, z, c, 1.0, grad.view_mut())?;
        Ok((loss, grad))
    }

    /// Adds `scale * ∂loss/∂z` into `grad` and returns the unscaled loss.
    pub fn accumulate_grad(
        &self,
        q: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
        c: &ChoiceMask,
        scale: f64,
        mut grad: ArrayViewMut2<'_, f64>,
    ) -> Result<LossBreakdown> {
        check_shapes(Some(q), z, Some(c))?;
        if grad.raw_dim() != z.raw_dim() {
            return Err(Error::invalid(
                "gradient buffer shape differs from embedding",
            ));
        }
        let w = &self.weights;
        let po = po_term(z, c, Some((scale * w.po, grad.view_mut())));
        let dom = dom_term(z, c, self.dom_scope, Some((scale * w.dom, grad.view_mut())))?;
        let mds = mds_term(q, z, Some((scale * w.mds, grad.view_mut())));
        let l2 = l2_term(z, Some((scale * w.l2, grad.view_mut())));
        Ok(LossBreakdown::combine(po, dom, mds, l2, w))
    }
}

fn check_shapes(
    q: Option<ArrayView2<'_, f64>>,
    z: ArrayView2<'_, f64>,
    c: Option<&ChoiceMask>,
) -> Result<()> {
    let m = z.nrows();
    if m == 0 || z.ncols() == 0 {
        return Err(Error::invalid("embedding must be non-empty"));
    }
    if let Some(c) = c {
        if c.len() != m {
            return Err(Error::invalid(format!(
                "mask length {} does not match {m} embedded points",
                c.len()
            )));
        }
    }
    if let Some(q) = q {
        if q.nrows() != m {
            return Err(Error::invalid(format!(
                "task has {} objects but embedding has {m} points",
                q.nrows()
            )));
        }
    }
    Ok(())
}

type GradSink<'a> = Option<(f64, ArrayViewMut2<'a, f64>)>;

/// Hinge penalty on every point that comes within margin 1 of dominating a
/// chosen point.
fn po_term(z: ArrayView2<'_, f64>, c: &ChoiceMask, mut sink: GradSink<'_>) -> f64 {
    let (m, d) = z.dim();
    let mut loss = 0.0;
    for j in (0..m).filter(|&j| c.get(j)) {
        for i in (0..m).filter(|&i| i != j) {
            let mut k_min = 0;
            let mut t_min = f64::INFINITY;
            for k in 0..d {
                let t = 1.0 + z[[i, k]] - z[[j, k]];
                if t < t_min {
                    t_min = t;
                    k_min = k;
                }
            }
            if t_min > 0.0 {
                loss += t_min;
                if let Some((s, g)) = sink.as_mut() {
                    g[[i, k_min]] += *s;
                    g[[j, k_min]] -= *s;
                }
            }
        }
    }
    loss
}

/// For every non-chosen point, the hinge distance to the closest would-be
/// dominator.
fn dom_term(
    z: ArrayView2<'_, f64>,
    c: &ChoiceMask,
    scope: DomScope,
    mut sink: GradSink<'_>,
) -> Result<f64> {
    let (m, d) = z.dim();
    let restrict = scope == DomScope::ChosenOnly && c.count_ones() > 0;
    let mut loss = 0.0;
    for i in (0..m).filter(|&i| !c.get(i)) {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..m).filter(|&j| j != i && (!restrict || c.get(j))) {
            let s: f64 = (0..d).map(|k| (1.0 + z[[i, k]] - z[[j, k]]).max(0.0)).sum();
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
        let (j, s) = best.ok_or_else(|| {
            Error::invalid("dominance loss of a lone non-chosen point has no candidate dominator")
        })?;
        loss += s;
        if let Some((scale, g)) = sink.as_mut() {
            for k in 0..d {
                if 1.0 + z[[i, k]] - z[[j, k]] > 0.0 {
                    g[[i, k]] += *scale;
                    g[[j, k]] -= *scale;
                }
            }
        }
    }
    Ok(loss)
}

fn euclidean(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pair-normalized raw stress between object-space and embedding distances.
fn mds_term(q: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, mut sink: GradSink<'_>) -> f64 {
    let (m, d) = z.dim();
    if m < 2 {
        return 0.0;
    }
    let norm = 2.0 / (m * (m - 1)) as f64;
    let mut loss = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let dx = euclidean(q.row(i), q.row(j));
            let dz = euclidean(z.row(i), z.row(j));
            let r = dx - dz;
            loss += r * r;
            if let Some((s, g)) = sink.as_mut() {
                if dz > 0.0 {
                    // ∂(r²)/∂z_i = -2 r (z_i - z_j) / dz
                    let coef = -2.0 * r / dz * norm * *s;
                    for k in 0..d {
                        let diff = z[[i, k]] - z[[j, k]];
                        g[[i, k]] += coef * diff;
                        g[[j, k]] -= coef * diff;
                    }
                }
            }
        }
    }
    norm * loss
}

fn l2_term(z: ArrayView2<'_, f64>, mut sink: GradSink<'_>) -> f64 {
    let mut loss = 0.0;
    for (i, row) in z.outer_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        loss += n;
        if let Some((s, g)) = sink.as_mut() {
            if n > 0.0 {
                for (k, v) in row.iter().enumerate() {
                    g[[i, k]] += *s * v / n;
                }
            }
        }
    }
    loss
}

/// `Σ_{i≠j} max(0, c_j · min_k (1 + z_ik − z_jk))`.
pub fn loss_po(z: ArrayView2<'_, f64>, c: &ChoiceMask) -> Result<f64> {
    check_shapes(None, z, Some(c))?;
    Ok(po_term(z, c, None))
}

/// `Σ_i (1 − c_i) · min_{j≠i} Σ_k max(0, 1 + z_ik − z_jk)`.
pub fn loss_dom(z: ArrayView2<'_, f64>, c: &ChoiceMask) -> Result<f64> {
    check_shapes(None, z, Some(c))?;
    dom_term(z, c, DomScope::AllPoints, None)
}

/// `2/(m(m−1)) · Σ_{i<j} (‖x_i − x_j‖ − ‖z_i − z_j‖)²`, zero for a single point.
pub fn loss_mds(q: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(Some(q), z, None)?;
    Ok(mds_term(q, z, None))
}

/// `Σ_i ‖z_i‖₂` (not squared).
pub fn loss_l2(z: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(None, z, None)?;
    Ok(l2_term(z, None))
}

pub fn loss_total(
    q: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    c: &ChoiceMask,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    PairwiseLoss::new(*w).evaluate(q, z, c)
}

/// Gradient of the weighted total with respect to `z`.
pub fn loss_grad(
    q: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    c: &ChoiceMask,
    w: &LossWeights,
) -> Result<Array2<f64>> {
    w.validate()?;
    PairwiseLoss::new(*w)
        .value_and_grad(q, z, c)
        .map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::pareto_front;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(bits: &[u8]) -> ChoiceMask {
        ChoiceMask::from_bits(bits).unwrap()
    }

    /// Literal transcription of the two hinge sums, used as an oracle.
    fn scalar_po(z: &[Vec<f64>], c: &[u8]) -> f64 {
        let mut total = 0.0;
        for i in 0..z.len() {
            for j in 0..z.len() {
                if i == j {
                    continue;
                }
                let inner = (0..z[0].len())
                    .map(|k| 1.0 + z[i][k] - z[j][k])
                    .fold(f64::INFINITY, f64::min);
                total += f64::max(0.0, f64::from(c[j]) * inner);
            }
        }
        total
    }

    fn scalar_dom(z: &[Vec<f64>], c: &[u8]) -> f64 {
        let mut total = 0.0;
        for i in 0..z.len() {
            let inner = (0..z.len())
                .filter(|&j| j != i)
                .map(|j| {
                    (0..z[0].len())
                        .map(|k| f64::max(0.0, 1.0 + z[i][k] - z[j][k]))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            total += f64::from(1 - c[i]) * inner;
        }
        total
    }

    #[test]
    fn po_examples() {
        let z = array![[0.0], [5.0]];
        assert_eq!(loss_po(z.view(), &mask(&[0, 0])).unwrap(), 0.0);
        assert_eq!(loss_po(z.view(), &mask(&[1, 0])).unwrap(), 6.0);
        assert_eq!(loss_po(z.view(), &mask(&[0, 1])).unwrap(), 0.0);
        let rows = vec![vec![0.0], vec![5.0]];
        assert_eq!(scalar_po(&rows, &[1, 0]), 6.0);
        assert!(loss_po(z.view(), &mask(&[1])).is_err());
    }

    #[test]
    fn dom_examples() {
        let z = array![[0.0], [5.0]];
        assert_eq!(loss_dom(z.view(), &mask(&[1, 1])).unwrap(), 0.0);
        assert_eq!(loss_dom(z.view(), &mask(&[0, 1])).unwrap(), 0.0);
        assert_eq!(loss_dom(z.view(), &mask(&[1, 0])).unwrap(), 6.0);
        let rows = vec![vec![0.0], vec![5.0]];
        assert_eq!(scalar_dom(&rows, &[1, 0]), 6.0);

        let lone = array![[1.0, 2.0]];
        assert!(loss_dom(lone.view(), &mask(&[0])).is_err());
        assert_eq!(loss_dom(lone.view(), &mask(&[1])).unwrap(), 0.0);
    }

    #[test]
    fn dom_chosen_only_scope() {
        // point 0 is nearly dominated by non-chosen point 2, but far from chosen point 1
        let z = array![[0.0, 0.0], [-5.0, 10.0], [0.5, 0.5]];
        let c = mask(&[0, 1, 0]);
        let q = Array2::zeros((3, 1));
        let weights = LossWeights::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let all = PairwiseLoss::new(weights)
            .evaluate(q.view(), z.view(), &c)
            .unwrap();
        let restricted = PairwiseLoss {
            weights,
            dom_scope: DomScope::ChosenOnly,
        }
        .evaluate(q.view(), z.view(), &c)
        .unwrap();
        // all points: point 0 → 0.5+0.5, point 2 → 1.5+1.5 via point 0
        assert_eq!(all.dom, 4.0);
        // chosen only: point 0 → 6 + 0, point 2 → 6.5 + 0
        assert_eq!(restricted.dom, 12.5);
    }

    #[test]
    fn mds_examples() {
        let q = array![[0.0], [3.0]];
        let z = array![[0.0, 0.0], [0.0, 1.0]];
        assert_eq!(loss_mds(q.view(), z.view()).unwrap(), 4.0);
        assert_eq!(
            loss_mds(array![[1.0]].view(), array![[2.0, 2.0]].view()).unwrap(),
            0.0
        );
        // rotated copy of the object configuration
        let q = array![[0.0, 0.0], [3.0, 4.0], [1.0, -1.0]];
        let z = array![[0.0, 0.0], [-4.0, 3.0], [1.0, 1.0]];
        assert!(loss_mds(q.view(), z.view()).unwrap().abs() < 1e-12);
        assert!(loss_mds(q.view(), array![[0.0]].view()).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_eq!(loss_l2(Array2::zeros((3, 2)).view()).unwrap(), 0.0);
        assert_eq!(loss_l2(array![[3.0, 4.0]].view()).unwrap(), 5.0);
        assert_eq!(loss_l2(array![[1.0, 0.0], [0.0, 2.0]].view()).unwrap(), 3.0);
    }

    #[test]
    fn total_examples() {
        let q = Array2::zeros((2, 1));
        let zeros = Array2::zeros((2, 2));
        let w = LossWeights::new(0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(
            loss_total(q.view(), zeros.view(), &mask(&[1, 1]), &w)
                .unwrap()
                .total,
            0.0
        );

        let z = array![[0.0], [5.0]];
        let q = array![[0.0], [5.0]];
        let w = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let b = loss_total(q.view(), z.view(), &mask(&[1, 0]), &w).unwrap();
        assert_eq!(b.total, 6.0);
        assert_eq!(b.dom, 6.0);

        // both chosen and isometric: the hinge and stress terms vanish, only the norm remains
        let z = array![[0.0, 1.0], [1.0, 0.0]];
        let q = array![[0.0], [2f64.sqrt()]];
        let b = loss_total(q.view(), z.view(), &mask(&[1, 1]), &LossWeights::uniform()).unwrap();
        assert_eq!(b.po, 0.0);
        assert_eq!(b.dom, 0.0);
        assert!(b.mds.abs() < 1e-15);
        let expected = 0.25 * (b.po + b.dom + b.mds + b.l2);
        assert!((b.total - expected).abs() <= 1e-9 * expected.abs());
    }

    #[test]
    fn weights_must_form_a_convex_combination() {
        assert!(LossWeights::new(0.5, 0.5, 0.0, 0.0).is_ok());
        assert!(LossWeights::new(0.5, 0.5, 0.1, 0.0).is_err());
        assert!(LossWeights::new(1.5, -0.5, 0.0, 0.0).is_err());
        assert!(LossWeights::new(0.25, 0.25, 0.25, 0.25 + 1e-12).is_ok());
    }

    #[test]
    fn l2_gradient_example() {
        let q = array![[0.0]];
        let z = array![[3.0, 4.0]];
        let w = LossWeights::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let g = loss_grad(q.view(), z.view(), &mask(&[1]), &w).unwrap();
        assert!((g[[0, 0]] - 0.6).abs() < 1e-12);
        assert!((g[[0, 1]] - 0.8).abs() < 1e-12);
        let fd = central_difference(q.view(), z.view(), &mask(&[1]), &w, 1e-5);
        assert!((fd[[0, 0]] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn zero_mask_has_zero_po_gradient() {
        let q = Array2::zeros((3, 2));
        let z = array![[0.1, 0.2], [0.3, -0.4], [1.0, 0.0]];
        let w = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let g = loss_grad(q.view(), z.view(), &mask(&[0, 0, 0]), &w).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    fn central_difference(
        q: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
        c: &ChoiceMask,
        w: &LossWeights,
        h: f64,
    ) -> Array2<f64> {
        let mut out = Array2::zeros(z.raw_dim());
        let mut probe = z.to_owned();
        for idx in ndarray::indices(z.raw_dim()) {
            let orig = probe[idx];
            probe[idx] = orig + h;
            let up = loss_total(q, probe.view(), c, w).unwrap().total;
            probe[idx] = orig - h;
            let down = loss_total(q, probe.view(), c, w).unwrap().total;
            probe[idx] = orig;
            out[idx] = (up - down) / (2.0 * h);
        }
        out
    }

    fn random_weights(rng: &mut impl Rng) -> LossWeights {
        let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        LossWeights::new(
            raw[0] / s,
            raw[1] / s,
            raw[2] / s,
            1.0 - (raw[0] + raw[1] + raw[2]) / s,
        )
        .unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = rng.random_range(2..=10);
            let dz = rng.random_range(1..=3);
            let dq = rng.random_range(1..=4);
            let q = Array2::from_shape_fn((m, dq), |_| rng.random_range(-1.0..1.0));
            let z = Array2::from_shape_fn((m, dz), |_| rng.random_range(-1.5..1.5));
            let c = ChoiceMask::new((0..m).map(|_| rng.random_bool(0.5)).collect());
            let c = if c.count_ones() == 0 {
                ChoiceMask::ones(m)
            } else {
                c
            };
            let w = random_weights(&mut rng);
            let g = loss_grad(q.view(), z.view(), &c, &w).unwrap();
            let fd = central_difference(q.view(), z.view(), &c, &w, 1e-5);
            for (a, n) in g.iter().zip(fd.iter()) {
                let scale = a.abs().max(n.abs()).max(1e-2);
                assert!(
                    (a - n).abs() / scale <= 1e-4,
                    "analytic {a} vs numeric {n} (m={m}, d'={dz})"
                );
            }
        }
    }

    #[test]
    fn zero_loss_implies_exact_front() {
        // chosen points on an anti-diagonal, each non-chosen one dominated by margin > 1
        let z = array![[0.0, 4.0], [2.0, 2.0], [4.0, 0.0], [-1.5, 0.5], [0.5, -1.5]];
        let c = mask(&[1, 1, 1, 0, 0]);
        assert_eq!(loss_po(z.view(), &c).unwrap(), 0.0);
        assert_eq!(loss_dom(z.view(), &c).unwrap(), 0.0);
        assert_eq!(pareto_front(z.view()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn shift_invariance(
            seed in any::<u64>(),
            shift in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(2..=8);
            let q = Array2::from_shape_fn((m, 3), |_| rng.random_range(0.0..1.0));
            let z = Array2::from_shape_fn((m, 2), |_| rng.random_range(-2.0..2.0));
            let c = ChoiceMask::new((0..m).map(|i| i == 0 || rng.random_bool(0.4)).collect());
            let shifted = &z + &ndarray::Array1::from(shift.clone());
            let tol = 1e-9;
            prop_assert!((loss_po(z.view(), &c).unwrap() - loss_po(shifted.view(), &c).unwrap()).abs() < tol * 100.0);
            prop_assert!((loss_dom(z.view(), &c).unwrap() - loss_dom(shifted.view(), &c).unwrap()).abs() < tol * 100.0);
            prop_assert!((loss_mds(q.view(), z.view()).unwrap() - loss_mds(q.view(), shifted.view()).unwrap()).abs() < tol);
            if shift.iter().any(|s| s.abs() > 0.5) {
                prop_assert!((loss_l2(z.view()).unwrap() - loss_l2(shifted.view()).unwrap()).abs() > 0.0);
            }
        }

        #[test]
        fn components_are_non_negative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(2..=8);
            let d = rng.random_range(1..=3);
            let q = Array2::from_shape_fn((m, 2), |_| rng.random_range(-3.0..3.0));
            let z = Array2::from_shape_fn((m, d), |_| rng.random_range(-3.0..3.0));
            let c = ChoiceMask::new((0..m).map(|_| rng.random_bool(0.5)).collect());
            let b = loss_total(q.view(), z.view(), &c, &random_weights(&mut rng)).unwrap();
            prop_assert!(b.po >= 0.0 && b.dom >= 0.0 && b.mds >= 0.0 && b.l2 >= 0.0 && b.total >= 0.0);
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(2..=8);
            let q = Array2::from_shape_fn((m, 2), |_| rng.random_range(-1.0..1.0));
            let z = Array2::from_shape_fn((m, 2), |_| rng.random_range(-1.0..1.0));
            let c = ChoiceMask::new((0..m).map(|_| rng.random_bool(0.5)).collect());
            let w = random_weights(&mut rng);
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rng);
            let qp = q.select(ndarray::Axis(0), &perm);
            let zp = z.select(ndarray::Axis(0), &perm);
            let cp = ChoiceMask::new(perm.iter().map(|&i| c.get(i)).collect());
            let b = loss_total(q.view(), z.view(), &c, &w).unwrap();
            let bp = loss_total(qp.view(), zp.view(), &cp, &w).unwrap();
            prop_assert!((b.total - bp.total).abs() < 1e-9);
            let g = loss_grad(q.view(), z.view(), &c, &w).unwrap();
            let gp = loss_grad(qp.view(), zp.view(), &cp, &w).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                for k in 0..2 {
                    prop_assert!((gp[[new, k]] - g[[old, k]]).abs() < 1e-9);
                }
            }
        }
    }
}
