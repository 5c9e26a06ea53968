//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Only what the generator, discriminator and predictor need: affine layers
//! with ReLU, sigmoid or identity activations, BCE and MSE losses, Adam and a
//! JSON checkpoint format.

use std::hash::{Hash, Hasher};
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Normalizer;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the layer output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => Zip::from(grad).and(output).for_each(|g, &y| *g *= y * (1.0 - y)),
            Activation::Identity => {}
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `outputs x inputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Uniform He-style initialisation, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..bound));
        Self { weights, bias: Array1::zeros(outputs), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        self.activation.apply(&mut z);
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
}

/// Intermediate values kept by [`MlpModel::forward_trace`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    pub activations: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace holds the input")
    }
}

/// Parameter gradients, laid out like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: model.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl MlpModel {
    /// Builds a network through the given layer widths, `dims[0]` being the
    /// input. Hidden layers use `hidden`, the last one `output`.
    pub fn new<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least an input and an output width");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self { layers }
    }

    /// `hidden_layers` ReLU layers of `width` units followed by the output layer.
    pub fn with_hidden<R: Rng>(
        inputs: usize,
        hidden_layers: usize,
        width: usize,
        outputs: usize,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![inputs];
        dims.extend(std::iter::repeat_n(width, hidden_layers));
        dims.push(outputs);
        Self::new(&dims, Activation::Relu, output, rng)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::Config(format!("layer {i}: bias length mismatch")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Config(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Hash of the exact parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for l in &self.layers {
            l.weights.shape().hash(&mut h);
            for v in l.weights.iter().chain(l.bias.iter()) {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Array2<f64> {
        let mut x = self.layers[0].forward(batch);
        for layer in &self.layers[1..] {
            x = layer.forward(&x);
        }
        x
    }

    pub fn forward_trace(&self, batch: Array2<f64>) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch);
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"));
            activations.push(next);
        }
        Trace { activations }
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the
    /// network output; returns parameter gradients and the input gradient.
    pub fn backward(&self, trace: &Trace, upstream: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut grad = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&trace.activations[i + 1], &mut grad);
            weights.push(grad.t().dot(&trace.activations[i]));
            biases.push(grad.sum_axis(Axis(0)));
            grad = grad.dot(&layer.weights);
        }
        weights.reverse();
        biases.reverse();
        (Gradients { weights, biases }, grad)
    }
}

/// Mean binary cross-entropy and its gradient with respect to `predictions`.
///
/// `predictions` is `B x 1`. Probabilities are clamped to
/// `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub fn bce_loss(predictions: &Array2<f64>, labels: &[f64]) -> (f64, Array2<f64>) {
    let b = predictions.nrows();
    assert_eq!(b, labels.len());
    let mut grad = Array2::zeros(predictions.raw_dim());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = predictions[[i, 0]].clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad[[i, 0]] = (p - y) / (p * (1.0 - p)) / b as f64;
    }
    (total / b as f64, grad)
}

/// Batch mean of the summed squared error over outputs.
pub fn mse_loss(predictions: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    assert_eq!(predictions.shape(), targets.shape());
    let b = predictions.nrows() as f64;
    let diff = predictions - targets;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;
    (loss, diff * (2.0 / b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub params: AdamParams,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(model: &MlpModel, params: AdamParams) -> Self {
        Self { params, step: 0, m: Gradients::zeros_like(model), v: Gradients::zeros_like(model) }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let AdamParams { beta1, beta2, eps } = state.params;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (i, layer) in model.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&grads.weights[i])
            .and(&mut state.m.weights[i])
            .and(&mut state.v.weights[i])
            .for_each(|p, &g, m, v| update(p, g, m, v));
        Zip::from(&mut layer.bias)
            .and(&grads.biases[i])
            .and(&mut state.m.biases[i])
            .and(&mut state.v.biases[i])
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
}

/// Shared optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 100, steps: 20_000, adam: AdamParams::default(), seed: 0 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

/// On-disk form of a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// `generator`, `discriminator` or `predictor`.
    pub role: String,
    pub architecture: Architecture,
    /// Row-major `outputs x inputs` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub normalizer: Normalizer,
    pub training_metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(
        role: &str,
        model: &MlpModel,
        normalizer: &Normalizer,
        training_metadata: serde_json::Value,
    ) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerSpec { inputs: l.inputs(), outputs: l.outputs(), activation: l.activation })
            .collect();
        Self {
            schema_version: CHECKPOINT_VERSION,
            role: role.to_string(),
            architecture: Architecture { input_dim: model.input_dim(), layers },
            weights: model.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: model.layers.iter().map(|l| l.bias.to_vec()).collect(),
            normalizer: normalizer.clone(),
            training_metadata,
        }
    }

    pub fn model(&self) -> std::result::Result<MlpModel, String> {
        let arch = &self.architecture;
        if arch.layers.len() != self.weights.len() || arch.layers.len() != self.biases.len() {
            return Err("layer count does not match stored parameters".into());
        }
        if arch.layers.first().map(|l| l.inputs) != Some(arch.input_dim) {
            return Err("input dimension does not match first layer".into());
        }
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            let w = &self.weights[i];
            let b = &self.biases[i];
            if w.len() != spec.inputs * spec.outputs || b.len() != spec.outputs {
                return Err(format!("layer {i}: parameter count does not match {spec:?}"));
            }
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(format!("layer {i}: non-finite parameter"));
            }
            layers.push(Dense {
                weights: Array2::from_shape_vec((spec.outputs, spec.inputs), w.clone())
                    .expect("length checked"),
                bias: Array1::from_vec(b.clone()),
                activation: spec.activation,
            });
        }
        MlpModel::from_layers(layers).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        crate::error::ensure_parent(path)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            other => {
                return Err(Error::version(
                    path,
                    format!("schema_version {other:?}, expected {CHECKPOINT_VERSION}"),
                ))
            }
        }
        let ckpt: Checkpoint = serde_json::from_value(raw).map_err(|e| Error::format(path, e))?;
        ckpt.model().map_err(|m| Error::version(path, m))?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(
    role: &str,
    model: &MlpModel,
    normalizer: &Normalizer,
    metadata: serde_json::Value,
    path: &Path,
) -> Result<()> {
    Checkpoint::new(role, model, normalizer, metadata).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    let model = ckpt.model().map_err(|m| Error::version(path, m))?;
    Ok((model, ckpt))
}
