//! Weight-shared embedding network: a ReLU multi-layer perceptron with batch
//! normalization on every hidden layer, followed by a linear head with `d'`
//! outputs. Every object of a task goes through the same parameters.

use std::hash::Hasher;

use fnv::FnvHasher;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; nothing is mutated.
    Inference,
}

/// Where batch normalization sits relative to the ReLU of a hidden layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    #[default]
    AfterActivation,
    BeforeActivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub placement: NormPlacement,
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            placement: NormPlacement::AfterActivation,
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }
}

/// Network shape, minus the input dimension (which comes from the data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub norm: NormConfig,
}

impl Architecture {
    pub fn new(hidden_layers: usize, hidden_units: usize, output_dim: usize) -> Self {
        Architecture {
            hidden_layers,
            hidden_units,
            output_dim,
            norm: NormConfig::default(),
        }
    }
}

/// Affine map `x W + b` with `W` stored fan-in × fan-out.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    fn fresh(width: usize, cfg: &NormConfig) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: cfg.momentum,
            epsilon: cfg.epsilon,
        }
    }

    fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub linear: Linear,
    pub norm: BatchNorm,
}

/// All parameters and batch-norm state of one embedding function.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    hidden: Vec<HiddenLayer>,
    head: Linear,
    placement: NormPlacement,
}

/// Cached intermediates of one hidden layer.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Array2<f64>,
    pub pre_activation: Array2<f64>,
    pub normalized: Array2<f64>,
    /// Output of the normalization, `γ x̂ + β`.
    pub norm_output: Array2<f64>,
    pub output: Array2<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub inv_std: Array1<f64>,
}

/// Everything backpropagation needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub head_input: Array2<f64>,
    pub mode: Mode,
    fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Gradient of a scalar loss with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub hidden: Vec<HiddenGrads>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl ParamGrads {
    /// Flat views in the same order as [`NetworkParams::trainable_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * self.hidden.len() + 2);
        for h in &self.hidden {
            out.push(h.weight.as_slice().expect("standard layout"));
            out.push(h.bias.as_slice().expect("standard layout"));
            out.push(h.gamma.as_slice().expect("standard layout"));
            out.push(h.beta.as_slice().expect("standard layout"));
        }
        out.push(self.head_weight.as_slice().expect("standard layout"));
        out.push(self.head_bias.as_slice().expect("standard layout"));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Variance-scaled Gaussian initialization; see [`NetworkParams::init`].
pub fn init_params(
    input_dim: usize,
    hidden_layers: usize,
    hidden_units: usize,
    output_dim: usize,
    seed: u64,
) -> Result<NetworkParams> {
    if hidden_layers == 0 {
        return Err(Error::invalid("hidden_layers must be at least 1"));
    }
    NetworkParams::init(
        input_dim,
        &Architecture::new(hidden_layers, hidden_units, output_dim),
        seed,
    )
}

fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl NetworkParams {
    /// Assembles a network from explicit layers, checking that dimensions chain.
    pub fn new(hidden: Vec<HiddenLayer>, head: Linear, placement: NormPlacement) -> Result<Self> {
        let params = NetworkParams {
            hidden,
            head,
            placement,
        };
        params.validate()?;
        Ok(params)
    }

    /// Weights `N(0, 2/fan_in)` for ReLU layers and `N(0, 1/fan_in)` for the
    /// head; zero biases; identity batch norm. Deterministic in `seed`.
    ///
    /// Zero hidden layers gives a head-only (linear) network.
    pub fn init(input_dim: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        if input_dim == 0 || arch.output_dim == 0 {
            return Err(Error::invalid(
                "input and output dimensions must be at least 1",
            ));
        }
        if arch.hidden_layers > 0 && arch.hidden_units == 0 {
            return Err(Error::invalid("hidden_units must be at least 1"));
        }
        if arch.norm.epsilon.is_nan()
            || arch.norm.epsilon <= 0.0
            || !(0.0..=1.0).contains(&arch.norm.momentum)
        {
            return Err(Error::invalid(
                "batch norm needs epsilon > 0 and momentum in [0, 1]",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = input_dim;
        let mut hidden = Vec::with_capacity(arch.hidden_layers);
        for _ in 0..arch.hidden_layers {
            let width = arch.hidden_units;
            hidden.push(HiddenLayer {
                linear: Linear {
                    weight: gaussian_matrix(fan_in, width, 2.0 / fan_in as f64, &mut rng),
                    bias: Array1::zeros(width),
                },
                norm: BatchNorm::fresh(width, &arch.norm),
            });
            fan_in = width;
        }
        let head = Linear {
            weight: gaussian_matrix(fan_in, arch.output_dim, 1.0 / fan_in as f64, &mut rng),
            bias: Array1::zeros(arch.output_dim),
        };
        NetworkParams::new(hidden, head, arch.norm.placement)
    }

    fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        if width == 0 {
            return Err(Error::invalid("network input dimension must be at least 1"));
        }
        for (l, layer) in self.hidden.iter().enumerate() {
            let lin = &layer.linear;
            let bn = &layer.norm;
            if lin.fan_in() != width || lin.bias.len() != lin.fan_out() {
                return Err(Error::invalid(format!("hidden layer {l} does not chain")));
            }
            width = lin.fan_out();
            if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                .iter()
                .any(|v| v.len() != width)
            {
                return Err(Error::invalid(format!(
                    "batch norm {l} has the wrong width"
                )));
            }
            if bn.running_var.iter().any(|v| v.is_nan() || *v <= 0.0)
                || bn.epsilon.is_nan()
                || bn.epsilon <= 0.0
            {
                return Err(Error::invalid(format!(
                    "batch norm {l} needs positive running variance and epsilon"
                )));
            }
        }
        if self.head.fan_in() != width
            || self.head.bias.len() != self.head.fan_out()
            || self.head.fan_out() == 0
        {
            return Err(Error::invalid("output layer does not chain"));
        }
        if !self.all_finite() {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let hidden_ok = self.hidden.iter().all(|h| {
            h.linear.weight.iter().all(|v| v.is_finite())
                && h.linear.bias.iter().all(|v| v.is_finite())
                && [
                    &h.norm.gamma,
                    &h.norm.beta,
                    &h.norm.running_mean,
                    &h.norm.running_var,
                ]
                .iter()
                .all(|a| a.iter().all(|v| v.is_finite()))
        });
        hidden_ok
            && self.head.weight.iter().all(|v| v.is_finite())
            && self.head.bias.iter().all(|v| v.is_finite())
    }

    pub fn input_dim(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.head.fan_in(), |h| h.linear.fan_in())
    }

    pub fn output_dim(&self) -> usize {
        self.head.fan_out()
    }

    pub fn hidden(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn placement(&self) -> NormPlacement {
        self.placement
    }

    pub fn hidden_mut(&mut self) -> &mut [HiddenLayer] {
        &mut self.hidden
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        &mut self.head
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.hidden
            .iter()
            .map(|h| h.linear.weight.len() + h.linear.bias.len() + 2 * h.norm.width())
            .sum::<usize>()
            + self.head.weight.len()
            + self.head.bias.len()
    }

    /// Mutable flat views of the trainable parameters (batch-norm running
    /// statistics excluded).
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4 * self.hidden.len() + 2);
        for h in &mut self.hidden {
            out.push(h.linear.weight.as_slice_mut().expect("standard layout"));
            out.push(h.linear.bias.as_slice_mut().expect("standard layout"));
            out.push(h.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(h.norm.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.weight.as_slice_mut().expect("standard layout"));
        out.push(self.head.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// Hash of the trainable parameters, used to detect stale traces.
    fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        let mut feed = |a: &[f64]| a.iter().for_each(|v| h.write_u64(v.to_bits()));
        for l in &self.hidden {
            feed(l.linear.weight.as_slice().expect("standard layout"));
            feed(l.linear.bias.as_slice().expect("standard layout"));
            feed(l.norm.gamma.as_slice().expect("standard layout"));
            feed(l.norm.beta.as_slice().expect("standard layout"));
        }
        feed(self.head.weight.as_slice().expect("standard layout"));
        feed(self.head.bias.as_slice().expect("standard layout"));
        h.finish()
    }

    fn check_input(&self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "batch has {} features, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Embeds every row of `batch` using running statistics.
    pub fn infer(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = batch.to_owned();
        for layer in &self.hidden {
            let bn = &layer.norm;
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
            let normalize =
                |x: &Array2<f64>| (x - &bn.running_mean) * &inv_std * &bn.gamma + &bn.beta;
            let pre = layer.linear.apply(a.view());
            a = match self.placement {
                NormPlacement::AfterActivation => normalize(&pre.mapv(relu)),
                NormPlacement::BeforeActivation => normalize(&pre).mapv(relu),
            };
        }
        Ok(self.head.apply(a.view()))
    }

    /// Forward pass with batch statistics, updating the running statistics.
    pub fn forward_train(
        &mut self,
        batch: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, ForwardTrace)> {
        self.check_input(batch)?;
        if batch.nrows() < 2 {
            return Err(Error::invalid(
                "train-mode forward needs at least two rows for batch statistics",
            ));
        }
        let n = batch.nrows() as f64;
        let mut a = batch.to_owned();
        let mut layers = Vec::with_capacity(self.hidden.len());
        for layer in &mut self.hidden {
            let pre = layer.linear.apply(a.view());
            let to_normalize = match self.placement {
                NormPlacement::AfterActivation => pre.mapv(relu),
                NormPlacement::BeforeActivation => pre.clone(),
            };
            let mean = to_normalize.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = &to_normalize - &mean;
            let var = centered
                .mapv(|v| v * v)
                .mean_axis(Axis(0))
                .expect("non-empty batch");
            let bn = &mut layer.norm;
            let inv_std = var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
            let normalized = centered * &inv_std;
            let norm_output = &normalized * &bn.gamma + &bn.beta;
            let output = match self.placement {
                NormPlacement::AfterActivation => norm_output.clone(),
                NormPlacement::BeforeActivation => norm_output.mapv(relu),
            };
            let mom = bn.momentum;
            let unbiased = n / (n - 1.0);
            Zip::from(&mut bn.running_mean)
                .and(&mean)
                .for_each(|r, &m| *r = (1.0 - mom) * *r + mom * m);
            Zip::from(&mut bn.running_var)
                .and(&var)
                .for_each(|r, &v| *r = (1.0 - mom) * *r + mom * v * unbiased);
            layers.push(LayerTrace {
                input: std::mem::replace(&mut a, output.clone()),
                pre_activation: pre,
                normalized,
                norm_output,
                output,
                mean,
                var,
                inv_std,
            });
        }
        let z = self.head.apply(a.view());
        let trace = ForwardTrace {
            layers,
            head_input: a,
            mode: Mode::Train,
            fingerprint: self.fingerprint(),
        };
        Ok((z, trace))
    }

    /// Forward pass in either mode. Inference traces cannot be backpropagated.
    pub fn forward(
        &mut self,
        batch: ArrayView2<'_, f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, ForwardTrace)> {
        match mode {
            Mode::Train => self.forward_train(batch),
            Mode::Inference => {
                let z = self.infer(batch)?;
                let trace = ForwardTrace {
                    layers: Vec::new(),
                    head_input: Array2::zeros((0, 0)),
                    mode: Mode::Inference,
                    fingerprint: self.fingerprint(),
                };
                Ok((z, trace))
            }
        }
    }

    /// Reverse-mode gradient of a loss whose gradient with respect to the
    /// network output is `grad_z`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        grad_z: ArrayView2<'_, f64>,
    ) -> Result<ParamGrads> {
        if trace.mode != Mode::Train {
            return Err(Error::invalid("backward needs a train-mode trace"));
        }
        if trace.layers.len() != self.hidden.len() || trace.fingerprint != self.fingerprint() {
            return Err(Error::invalid("trace does not belong to these parameters"));
        }
        if grad_z.nrows() != trace.head_input.nrows() || grad_z.ncols() != self.output_dim() {
            return Err(Error::invalid(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                grad_z.nrows(),
                grad_z.ncols(),
                trace.head_input.nrows(),
                self.output_dim()
            )));
        }
        let head_weight = standard_layout(trace.head_input.t().dot(&grad_z));
        let head_bias = grad_z.sum_axis(Axis(0));
        let mut upstream = grad_z.dot(&self.head.weight.t());

        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (l, (layer, lt)) in self.hidden.iter().zip(&trace.layers).enumerate().rev() {
            let d_norm_out = match self.placement {
                NormPlacement::AfterActivation => upstream,
                NormPlacement::BeforeActivation => {
                    Zip::from(&mut upstream)
                        .and(&lt.norm_output)
                        .for_each(|g, &y| *g = if y > 0.0 { *g } else { 0.0 });
                    upstream
                }
            };
            let gamma = (&d_norm_out * &lt.normalized).sum_axis(Axis(0));
            let beta = d_norm_out.sum_axis(Axis(0));
            let d_normalized = d_norm_out * &layer.norm.gamma;
            let mut d_pre = batch_norm_input_grad(&d_normalized, &lt.normalized, &lt.inv_std);
            if self.placement == NormPlacement::AfterActivation {
                Zip::from(&mut d_pre)
                    .and(&lt.pre_activation)
                    .for_each(|g, &p| *g = if p > 0.0 { *g } else { 0.0 });
            }
            let weight = standard_layout(lt.input.t().dot(&d_pre));
            let bias = d_pre.sum_axis(Axis(0));
            upstream = if l > 0 {
                d_pre.dot(&layer.linear.weight.t())
            } else {
                Array2::zeros((0, 0))
            };
            hidden.push(HiddenGrads {
                weight,
                bias,
                gamma,
                beta,
            });
        }
        hidden.reverse();
        Ok(ParamGrads {
            hidden,
            head_weight,
            head_bias,
        })
    }
}

/// Products of transposed views may come back column-major; gradients are
/// exposed as flat row-major slices.
fn standard_layout(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Gradient through `x̂ = (x − μ_B) / √(σ²_B + ε)` including the dependence
/// of the batch statistics on `x`.
fn batch_norm_input_grad(
    d_normalized: &Array2<f64>,
    normalized: &Array2<f64>,
    inv_std: &Array1<f64>,
) -> Array2<f64> {
    let n = d_normalized.nrows() as f64;
    let sum_d = d_normalized.sum_axis(Axis(0));
    let sum_dx = (d_normalized * normalized).sum_axis(Axis(0));
    let mut out = d_normalized * n - &sum_d - &(normalized * &sum_dx);
    out *= &(inv_std / n);
    out
}
