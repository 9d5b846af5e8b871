//! Feed-forward regression network trained by minibatch gradient descent,
//! with exact reverse-mode input gradients.
//!
//! Inputs are rescaled to `[0, 1]` per dimension of the sampling box before
//! the first layer and targets pass through an affine map after the last;
//! both are part of the model, so values and gradients are always reported
//! in original coordinates.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, TargetScaling};
use crate::error::{check_dim, Error, Result};
use crate::function::ScalarModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Tanh,
    /// Piecewise linear (ReLU).
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            // Stable log(1 + e^v).
            Activation::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(pre),
            Activation::Tanh => 1.0 - post * post,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SquaredError,
    /// Sigmoid output with binary cross-entropy; targets must be 0 or 1.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Momentum {
        momentum: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of weight layers, output layer included.
    pub depth: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 7,
            hidden_width: 64,
            activation: Activation::Softplus,
            loss: Loss::SquaredError,
            optimizer: Optimizer::adam(),
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::config("depth must be at least 2"));
        }
        if self.hidden_width == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "hidden width, epochs and batch size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `fan_in × fan_out`.
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// A trained network. Immutable once returned by [`train_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    input_low: Vec<f64>,
    input_high: Vec<f64>,
    target: TargetScaling,
    layers: Vec<Layer>,
    summary: TrainingSummary,
}

struct ForwardTrace {
    /// `inputs[l]` feeds layer `l`; the last entry is the raw network output.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl Model {
    /// Randomly initialized network: uniform weights in `±√(6 / fan_in)`,
    /// zero biases.
    pub fn init(
        config: &ModelConfig,
        bounds: &[(f64, f64)],
        target: TargetScaling,
    ) -> Result<Self> {
        config.validate()?;
        let input_dim = bounds.len();
        if input_dim == 0 {
            return Err(Error::config("input dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let fan_in = if l == 0 {
                input_dim
            } else {
                config.hidden_width
            };
            let fan_out = if l + 1 == config.depth {
                1
            } else {
                config.hidden_width
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
            layers.push(Layer {
                weights,
                bias: Array1::zeros(fan_out),
            });
        }
        Model::from_parts(config.clone(), bounds, target, layers)
    }

    /// Network with every weight and bias zero.
    pub fn zeros(config: &ModelConfig, bounds: &[(f64, f64)]) -> Result<Self> {
        let mut model = Model::init(config, bounds, TargetScaling::identity())?;
        for layer in &mut model.layers {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        Ok(model)
    }

    fn from_parts(
        config: ModelConfig,
        bounds: &[(f64, f64)],
        target: TargetScaling,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        for &(lo, hi) in bounds {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config("input bounds must satisfy low < high"));
            }
        }
        Ok(Model {
            config,
            input_low: bounds.iter().map(|b| b.0).collect(),
            input_high: bounds.iter().map(|b| b.1).collect(),
            target,
            layers,
            summary: TrainingSummary {
                epochs_run: 0,
                train_loss: f64::NAN,
                validation_loss: None,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn summary(&self) -> &TrainingSummary {
        &self.summary
    }

    /// Per-dimension `(low, high)` the inputs are normalized against.
    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        self.input_low
            .iter()
            .copied()
            .zip(self.input_high.iter().copied())
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_low.len(), x.len())?;
        Ok(self.value(x))
    }

    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_low.len(), x.len())?;
        Ok(self.gradient(x))
    }

    fn normalize(&self, xs: &[Vec<f64>]) -> Array2<f64> {
        let n = self.input_low.len();
        Array2::from_shape_fn((xs.len(), n), |(r, i)| {
            (xs[r][i] - self.input_low[i]) / (self.input_high[i] - self.input_low[i])
        })
    }

    fn forward(&self, z: Array2<f64>) -> ForwardTrace {
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(last);
        inputs.push(z);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = inputs[l].dot(&layer.weights);
            out += &layer.bias;
            if l < last {
                let post = out.mapv(|v| act.apply(v));
                pre.push(out);
                inputs.push(post);
            } else {
                inputs.push(out);
            }
        }
        ForwardTrace { inputs, pre }
    }

    /// Network output before the output transform.
    fn raw_output(trace: &ForwardTrace) -> ArrayView2<'_, f64> {
        trace.inputs.last().expect("non-empty trace").view()
    }

    /// Backpropagates `delta` (gradient with respect to the raw output) and
    /// returns the gradient with respect to the normalized input, filling
    /// `grads` with parameter gradients when given.
    fn backward(
        &self,
        trace: &ForwardTrace,
        mut delta: Array2<f64>,
        mut grads: Option<&mut [Layer]>,
    ) -> Array2<f64> {
        let act = self.config.activation;
        for l in (0..self.layers.len()).rev() {
            if let Some(g) = grads.as_deref_mut() {
                g[l].weights = trace.inputs[l].t().dot(&delta);
                g[l].bias = delta.sum_axis(Axis(0));
            }
            let mut upstream = delta.dot(&self.layers[l].weights.t());
            if l > 0 {
                let pre = &trace.pre[l - 1];
                let post = &trace.inputs[l];
                ndarray::Zip::from(&mut upstream)
                    .and(pre)
                    .and(post)
                    .for_each(|u, &p, &q| *u *= act.derivative(p, q));
            }
            delta = upstream;
        }
        delta
    }

    fn output_transform(&self, raw: f64) -> f64 {
        let v = match self.config.loss {
            Loss::SquaredError => raw,
            Loss::Logistic => sigmoid(raw),
        };
        self.target.scale * v + self.target.offset
    }

    fn output_slope(&self, raw: f64) -> f64 {
        let d = match self.config.loss {
            Loss::SquaredError => 1.0,
            Loss::Logistic => {
                let s = sigmoid(raw);
                s * (1.0 - s)
            }
        };
        self.target.scale * d
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

impl ScalarModel for Model {
    fn input_dim(&self) -> usize {
        self.input_low.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.values(std::slice::from_ref(&x.to_vec()))[0]
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradients(std::slice::from_ref(&x.to_vec()))
            .pop()
            .expect("one gradient")
    }

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        if xs.is_empty() {
            return Vec::new();
        }
        let trace = self.forward(self.normalize(xs));
        Model::raw_output(&trace)
            .column(0)
            .iter()
            .map(|&raw| self.output_transform(raw))
            .collect()
    }

    fn gradients(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if xs.is_empty() {
            return Vec::new();
        }
        let trace = self.forward(self.normalize(xs));
        let raw = Model::raw_output(&trace);
        let delta = Array2::from_shape_fn((xs.len(), 1), |(r, _)| self.output_slope(raw[[r, 0]]));
        let dz = self.backward(&trace, delta, None);
        dz.outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, g)| g / (self.input_high[i] - self.input_low[i]))
                    .collect()
            })
            .collect()
    }
}

/// Trains on the dataset's training split and reports the loss on its
/// validation split. Deterministic given the dataset and `config.seed`.
pub fn train_model(dataset: &Dataset, config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let meta = &dataset.meta;
    if dataset.samples.is_empty() || meta.train_indices.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    let n = meta.bbox.dim();
    for s in &dataset.samples {
        check_dim(n, s.x.len())?;
    }
    let scaling = meta.target_scaling;
    if config.loss == Loss::Logistic {
        let binary = dataset.samples.iter().all(|s| {
            let t = scaling.to_model(s.y);
            t == 0.0 || t == 1.0
        });
        if !binary {
            return Err(Error::config("logistic loss needs targets in {0, 1}"));
        }
    }

    let mut model = Model::init(config, &meta.bbox.ranges, scaling)?;
    let mut optimizer = OptimizerState::new(&model, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_5a3b1e5);
    let mut order = meta.train_indices.clone();
    let mut last_finite = model.clone();
    let mut train_loss = f64::NAN;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| dataset.samples[i].x.clone())
                .collect();
            let targets: Vec<f64> = batch
                .iter()
                .map(|&i| scaling.to_model(dataset.samples[i].y))
                .collect();
            let trace = model.forward(model.normalize(&xs));
            let raw = Model::raw_output(&trace);
            let count = batch.len() as f64;
            let mut delta = Array2::zeros((batch.len(), 1));
            for (r, &t) in targets.iter().enumerate() {
                let (loss, grad) = loss_and_grad(config.loss, raw[[r, 0]], t);
                total += loss;
                delta[[r, 0]] = grad / count;
            }
            let mut grads = model.layers.clone();
            model.backward(&trace, delta, Some(&mut grads));
            optimizer.step(&mut model.layers, &grads, config.learning_rate);
        }
        train_loss = total / order.len() as f64;
        let finite = train_loss.is_finite()
            && model
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::TrainingDiverged {
                epoch,
                last_finite: Box::new(last_finite),
            });
        }
        last_finite.layers.clone_from(&model.layers);
    }

    let validation_loss = (!meta.validation_indices.is_empty())
        .then(|| mean_loss(&model, dataset, &meta.validation_indices));
    model.summary = TrainingSummary {
        epochs_run: config.epochs,
        train_loss,
        validation_loss,
    };
    Ok(model)
}

/// Mean training loss of `model` over the given sample indices.
pub fn mean_loss(model: &Model, dataset: &Dataset, indices: &[usize]) -> f64 {
    let xs: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| dataset.samples[i].x.clone())
        .collect();
    let trace = model.forward(model.normalize(&xs));
    let raw = Model::raw_output(&trace);
    let total: f64 = indices
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let t = model.target.to_model(dataset.samples[i].y);
            loss_and_grad(model.config.loss, raw[[r, 0]], t).0
        })
        .sum();
    total / indices.len() as f64
}

/// Fraction of samples at `indices` whose prediction falls on the same side
/// of `threshold` as the label.
pub fn accuracy(
    model: &impl ScalarModel,
    dataset: &Dataset,
    indices: &[usize],
    threshold: f64,
) -> f64 {
    if indices.is_empty() {
        return f64::NAN;
    }
    let xs: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| dataset.samples[i].x.clone())
        .collect();
    let preds = model.values(&xs);
    let correct = indices
        .iter()
        .zip(&preds)
        .filter(|(&i, &p)| (p >= threshold) == (dataset.samples[i].y >= threshold))
        .count();
    correct as f64 / indices.len() as f64
}

fn loss_and_grad(loss: Loss, raw: f64, target: f64) -> (f64, f64) {
    match loss {
        Loss::SquaredError => {
            let r = raw - target;
            (0.5 * r * r, r)
        }
        Loss::Logistic => {
            // Cross-entropy on logits: softplus(raw) − t·raw.
            let l = raw.max(0.0) + (-raw.abs()).exp().ln_1p() - target * raw;
            (l, sigmoid(raw) - target)
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

enum OptimizerState {
    Momentum {
        momentum: f64,
        velocity: Vec<Layer>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: i32,
        first: Vec<Layer>,
        second: Vec<Layer>,
    },
}

impl OptimizerState {
    fn new(model: &Model, kind: Optimizer) -> Self {
        let zeros: Vec<Layer> = model
            .layers
            .iter()
            .map(|l| Layer {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        match kind {
            Optimizer::Momentum { momentum } => OptimizerState::Momentum {
                momentum,
                velocity: zeros,
            },
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                step: 0,
                first: zeros.clone(),
                second: zeros,
            },
        }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &[Layer], lr: f64) {
        match self {
            OptimizerState::Momentum { momentum, velocity } => {
                let mu = *momentum;
                for ((layer, grad), vel) in layers.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&mut vel.weights)
                        .and(&grad.weights)
                        .for_each(|w, v, &g| {
                            *v = mu * *v - lr * g;
                            *w += *v;
                        });
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&mut vel.bias)
                        .and(&grad.bias)
                        .for_each(|w, v, &g| {
                            *v = mu * *v - lr * g;
                            *w += *v;
                        });
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                step,
                first,
                second,
            } => {
                *step += 1;
                let (b1, b2, eps) = (*beta1, *beta2, *epsilon);
                let c1 = 1.0 - b1.powi(*step);
                let c2 = 1.0 - b2.powi(*step);
                let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for (((layer, grad), m), v) in layers
                    .iter_mut()
                    .zip(grads)
                    .zip(first.iter_mut())
                    .zip(second.iter_mut())
                {
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&grad.weights)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&grad.bias)
                        .for_each(|w, m, v, &g| update(w, m, v, g));
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_in × fan_out`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ModelConfig,
    input_low: Vec<f64>,
    input_high: Vec<f64>,
    target_scaling: TargetScaling,
    summary: TrainingSummary,
    layers: Vec<LayerFile>,
}

impl From<&Model> for ModelFile {
    fn from(m: &Model) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: m.config.clone(),
            input_low: m.input_low.clone(),
            input_high: m.input_high.clone(),
            target_scaling: m.target,
            summary: m.summary.clone(),
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    fan_in: l.weights.nrows(),
                    fan_out: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        check_dim(f.input_low.len(), f.input_high.len())?;
        let mut expected_in = f.input_low.len();
        let mut layers = Vec::with_capacity(f.layers.len());
        for (l, lf) in f.layers.into_iter().enumerate() {
            if lf.fan_in != expected_in {
                return Err(Error::Format(format!("layer {l} has fan-in {}", lf.fan_in)));
            }
            check_dim(lf.fan_out, lf.bias.len())?;
            let weights = Array2::from_shape_vec((lf.fan_in, lf.fan_out), lf.weights)
                .map_err(|e| Error::Format(e.to_string()))?;
            expected_in = lf.fan_out;
            layers.push(Layer {
                weights,
                bias: Array1::from(lf.bias),
            });
        }
        if expected_in != 1 || layers.is_empty() {
            return Err(Error::Format("network output must be scalar".into()));
        }
        let bounds: Vec<(f64, f64)> = f.input_low.into_iter().zip(f.input_high).collect();
        let mut model = Model::from_parts(f.config, &bounds, f.target_scaling, layers)?;
        model.summary = f.summary;
        Ok(model)
    }
}
