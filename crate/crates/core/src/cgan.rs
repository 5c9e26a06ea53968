//! Conditional GAN for inverse linkage design.
//!
//! The generator maps noise and a target `(d_max, eta_min)` to the five
//! normalized linkage parameters. Besides the usual adversarial signal it is
//! trained through a frozen surrogate predictor (the predictor loss pulls the
//! estimated conditions of generated linkages towards their targets) and a
//! similarity loss that rewards distance between a sample and its nearest
//! batch-mate. Fake target conditions are drawn SMOTE-style: a real condition
//! pair interpolated towards one of its k nearest neighbours.

use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::kinematics::Linkage;
use crate::knn::KdTree;
use crate::neuralnet::{
    adam_step, bce_loss, mse_loss, Activation, AdamParams, AdamState, Checkpoint, MlpModel,
    TrainingConfig,
};

pub const LINKAGE_DIM: usize = 5;
pub const CONDITION_DIM: usize = 2;
pub const DEFAULT_NOISE_DIM: usize = 5;
pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub hidden_layers: usize,
    pub width: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self { hidden_layers: 5, width: 20 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub model: MlpModel,
    pub noise_dim: usize,
}

impl Generator {
    pub fn new<R: Rng>(shape: NetworkShape, noise_dim: usize, rng: &mut R) -> Self {
        let model = MlpModel::with_hidden(
            noise_dim + CONDITION_DIM,
            shape.hidden_layers,
            shape.width,
            LINKAGE_DIM,
            Activation::Sigmoid,
            rng,
        );
        Self { model, noise_dim }
    }

    pub fn from_model(model: MlpModel) -> Result<Self> {
        if model.output_dim() != LINKAGE_DIM || model.input_dim() <= CONDITION_DIM {
            return Err(Error::Config("model does not have generator dimensions".into()));
        }
        let noise_dim = model.input_dim() - CONDITION_DIM;
        Ok(Self { model, noise_dim })
    }

    /// Rows of `[noise | unit conditions]` to unit linkage rows.
    pub fn input(noise: &Array2<f64>, conditions: &Array2<f64>) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[noise.view(), conditions.view()]).expect("same batch size")
    }

    pub fn noise<R: Rng>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.noise_dim), || rng.sample(StandardNormal))
    }

    pub fn save(&self, normalizer: &Normalizer, metadata: serde_json::Value, path: &Path) -> Result<()> {
        Checkpoint::new("generator", &self.model, normalizer, metadata).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Normalizer)> {
        let ckpt = Checkpoint::load(path)?;
        let model = ckpt.model().map_err(|m| Error::version(path, m))?;
        let generator = Self::from_model(model).map_err(|e| Error::version(path, e))?;
        Ok((generator, ckpt.normalizer))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub model: MlpModel,
}

impl Discriminator {
    pub fn new<R: Rng>(shape: NetworkShape, rng: &mut R) -> Self {
        let model = MlpModel::with_hidden(
            LINKAGE_DIM + CONDITION_DIM,
            shape.hidden_layers,
            shape.width,
            1,
            Activation::Sigmoid,
            rng,
        );
        Self { model }
    }
}

/// Surrogate for the exact condition computation, frozen once trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub model: MlpModel,
}

impl Predictor {
    pub fn new<R: Rng>(shape: NetworkShape, rng: &mut R) -> Self {
        let model = MlpModel::with_hidden(
            LINKAGE_DIM,
            shape.hidden_layers,
            shape.width,
            CONDITION_DIM,
            Activation::Identity,
            rng,
        );
        Self { model }
    }

    pub fn from_model(model: MlpModel) -> Result<Self> {
        if model.input_dim() != LINKAGE_DIM || model.output_dim() != CONDITION_DIM {
            return Err(Error::Config("model does not have predictor dimensions".into()));
        }
        Ok(Self { model })
    }

    pub fn fingerprint(&self) -> u64 {
        self.model.fingerprint()
    }

    /// Estimated conditions in raw units.
    pub fn predict(&self, normalizer: &Normalizer, linkages: &[Linkage]) -> Vec<[f64; 2]> {
        if linkages.is_empty() {
            return Vec::new();
        }
        let x = linkage_matrix(normalizer, linkages);
        let y = self.model.forward(&x);
        y.outer_iter().map(|r| normalizer.conditions_from_unit([r[0], r[1]])).collect()
    }

    pub fn save(&self, normalizer: &Normalizer, metadata: serde_json::Value, path: &Path) -> Result<()> {
        Checkpoint::new("predictor", &self.model, normalizer, metadata).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Normalizer)> {
        let ckpt = Checkpoint::load(path)?;
        let model = ckpt.model().map_err(|m| Error::version(path, m))?;
        let predictor = Self::from_model(model).map_err(|e| Error::version(path, e))?;
        Ok((predictor, ckpt.normalizer))
    }
}

fn linkage_matrix(normalizer: &Normalizer, linkages: &[Linkage]) -> Array2<f64> {
    let mut x = Array2::zeros((linkages.len(), LINKAGE_DIM));
    for (mut row, l) in x.outer_iter_mut().zip(linkages) {
        for (dst, v) in row.iter_mut().zip(normalizer.linkage_to_unit(l)) {
            *dst = v;
        }
    }
    x
}

fn rows_matrix<const N: usize>(rows: &[[f64; N]]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), N), |(i, j)| rows[i][j])
}

/// SMOTE-style sampler of realistic target conditions, in unit space.
#[derive(Clone, Debug)]
pub struct ConditionSampler {
    reference: Vec<[f64; 2]>,
    neighbors: Vec<u32>,
    k: usize,
}

impl ConditionSampler {
    /// `k` is clamped to the number of other reference points.
    pub fn new(reference: Vec<[f64; 2]>, k: usize) -> Self {
        assert!(!reference.is_empty(), "condition sampler needs reference points");
        let k = k.min(reference.len() - 1);
        let tree = KdTree::build(reference.clone());
        let neighbors = (0..reference.len())
            .into_par_iter()
            .flat_map_iter(|i| tree.nearest(reference[i], k, Some(i)).into_iter().map(|j| j as u32))
            .collect();
        Self { reference, neighbors, k }
    }

    pub fn from_dataset(dataset: &Dataset, normalizer: &Normalizer, k: usize) -> Self {
        let reference =
            dataset.samples.iter().map(|s| normalizer.conditions_to_unit(s.conditions.to_array())).collect();
        Self::new(reference, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference(&self) -> &[[f64; 2]] {
        &self.reference
    }

    /// `c_i + lambda (c_j - c_i)` with `c_i` uniform over the reference set,
    /// `c_j` uniform among its `k` nearest neighbours and `lambda ~ U(0, 1)`.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let i = rng.random_range(0..self.reference.len());
                let ci = self.reference[i];
                if self.k == 0 {
                    return ci;
                }
                let j = self.neighbors[i * self.k + rng.random_range(0..self.k)] as usize;
                let cj = self.reference[j];
                let lambda: f64 = rng.random();
                [ci[0] + lambda * (cj[0] - ci[0]), ci[1] + lambda * (cj[1] - ci[1])]
            })
            .collect()
    }

    fn sample_matrix<R: Rng>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        rows_matrix(&self.sample(n, rng))
    }
}

/// Raw-unit fake conditions, deterministic in `seed`.
pub fn sample_fake_conditions(
    sampler: &ConditionSampler,
    normalizer: &Normalizer,
    n: usize,
    seed: u64,
) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampler.sample(n, &mut rng).into_iter().map(|c| normalizer.conditions_from_unit(c)).collect()
}

/// Negative mean distance from each row to its nearest other row, and the
/// gradient with respect to the rows.
///
/// Coincident nearest pairs contribute zero distance and zero gradient.
pub fn similarity_loss(x: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = x.nrows();
    let mut grad = Array2::zeros(x.raw_dim());
    if n < 2 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        let mut best = f64::INFINITY;
        let mut nearest = i;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2: f64 = xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best {
                best = d2;
                nearest = j;
            }
        }
        let d = best.sqrt();
        total += d;
        if d > 0.0 {
            let scale = -1.0 / (d * n as f64);
            for c in 0..x.ncols() {
                let diff = x[[i, c]] - x[[nearest, c]];
                grad[[i, c]] += scale * diff;
                grad[[nearest, c]] -= scale * diff;
            }
        }
    }
    (-total / n as f64, grad)
}

/// Which generator losses are active; the four ablation models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub use_predictor_loss: bool,
    pub use_similarity_loss: bool,
}

impl LossFlags {
    pub const ALL: LossFlags = LossFlags { use_predictor_loss: true, use_similarity_loss: true };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationModel {
    A,
    B,
    C,
    D,
}

impl AblationModel {
    pub const ALL: [AblationModel; 4] = [Self::A, Self::B, Self::C, Self::D];

    pub fn flags(self) -> LossFlags {
        let (p, s) = match self {
            Self::A => (false, false),
            Self::B => (true, false),
            Self::C => (false, true),
            Self::D => (true, true),
        };
        LossFlags { use_predictor_loss: p, use_similarity_loss: s }
    }
}

impl std::str::FromStr for AblationModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            _ => Err(format!("unknown model {s:?}, expected A, B, C or D")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub w_p: f64,
    pub w_s: f64,
    pub batch_size: usize,
    /// Generator updates; each is preceded by one discriminator update.
    pub steps: usize,
    pub noise_dim: usize,
    pub shape: NetworkShape,
    pub k_neighbors: usize,
    pub adam: AdamParams,
    pub seed: u64,
    /// Record a loss report every this many steps.
    pub log_every: usize,
    /// When non-zero, the generator is scored on held-out fake conditions
    /// every this many steps and the snapshot with the lowest predictor loss
    /// is returned instead of the final one.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lr_generator: 1e-3,
            lr_discriminator: 1e-4,
            w_p: 0.1,
            w_s: 0.01,
            batch_size: 100,
            steps: 20_000,
            noise_dim: DEFAULT_NOISE_DIM,
            shape: NetworkShape::default(),
            k_neighbors: DEFAULT_NEIGHBORS,
            adam: AdamParams::default(),
            seed: 0,
            log_every: 1,
            snapshot_every: 1000,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.w_p >= 0.0 && self.w_s >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.noise_dim == 0 || self.log_every == 0 {
            return Err(Error::Config("noise_dim and log_every must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_weights(&self, flags: LossFlags) -> (f64, f64) {
        (
            if flags.use_predictor_loss { self.w_p } else { 0.0 },
            if flags.use_similarity_loss { self.w_s } else { 0.0 },
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanLossReport {
    pub step: usize,
    pub l_d: f64,
    pub l_g: f64,
    pub l_p: f64,
    pub l_s: f64,
    pub l_gps: f64,
    pub w_p: f64,
    pub w_s: f64,
}

#[derive(Clone, Debug)]
pub struct GanOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub history: Vec<GanLossReport>,
    /// Step after which the returned generator was taken.
    pub selected_step: usize,
}

impl GanOutcome {
    pub fn final_report(&self) -> Option<&GanLossReport> {
        self.history.last()
    }
}

/// Unit-space training matrix: 5 linkage columns then 2 condition columns.
fn training_matrix(dataset: &Dataset, normalizer: &Normalizer) -> Array2<f64> {
    let mut m = Array2::zeros((dataset.len(), LINKAGE_DIM + CONDITION_DIM));
    for (mut row, s) in m.outer_iter_mut().zip(&dataset.samples) {
        let x = normalizer.linkage_to_unit(&s.linkage);
        let c = normalizer.conditions_to_unit(s.conditions.to_array());
        for (dst, v) in row.iter_mut().zip(x.iter().chain(c.iter())) {
            *dst = *v;
        }
    }
    m
}

fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Alternating discriminator / generator training against a frozen predictor.
pub fn train_cgan(
    dataset: &Dataset,
    normalizer: &Normalizer,
    predictor: &Predictor,
    sampler: &ConditionSampler,
    config: &GanConfig,
    flags: LossFlags,
) -> Result<GanOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let (w_p, w_s) = config.effective_weights(flags);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generator = Generator::new(config.shape, config.noise_dim, &mut rng);
    let mut discriminator = Discriminator::new(config.shape, &mut rng);
    let mut g_opt = AdamState::new(&generator.model, config.adam);
    let mut d_opt = AdamState::new(&discriminator.model, config.adam);
    let real = training_matrix(dataset, normalizer);
    let b = config.batch_size;
    let labels: Vec<f64> = (0..2 * b).map(|i| if i < b { 1.0 } else { 0.0 }).collect();
    let ones = vec![1.0; b];
    let mut history = Vec::with_capacity(config.steps / config.log_every + 1);
    let score_seed = config.seed ^ SCORE_SEED_MIX;
    let mut best: Option<(f64, usize, Generator)> = None;

    for step in 0..config.steps {
        // discriminator: real rows labelled 1, generated rows labelled 0
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..real.nrows())).collect();
        let real_batch = gather_rows(&real, &idx);
        let fake_c = sampler.sample_matrix(b, &mut rng);
        let z = generator.noise(b, &mut rng);
        let fake_x = generator.model.forward(&Generator::input(&z, &fake_c));
        let fake_batch = ndarray::concatenate(Axis(1), &[fake_x.view(), fake_c.view()]).expect("widths");
        let d_in = ndarray::concatenate(Axis(0), &[real_batch.view(), fake_batch.view()]).expect("rows");
        let d_trace = discriminator.model.forward_trace(d_in);
        let (l_d, d_up) = bce_loss(d_trace.output(), &labels);
        let (d_grads, _) = discriminator.model.backward(&d_trace, &d_up);
        adam_step(&mut discriminator.model, &d_grads, &mut d_opt, config.lr_discriminator);

        // generator: non-saturating adversarial term plus predictor and similarity terms
        let cond = sampler.sample_matrix(b, &mut rng);
        let z = generator.noise(b, &mut rng);
        let g_trace = generator.model.forward_trace(Generator::input(&z, &cond));
        let x = g_trace.output().clone();
        let dx_in = ndarray::concatenate(Axis(1), &[x.view(), cond.view()]).expect("widths");
        let dg_trace = discriminator.model.forward_trace(dx_in);
        let (l_g, g_up) = bce_loss(dg_trace.output(), &ones);
        let (_, d_input_grad) = discriminator.model.backward(&dg_trace, &g_up);
        let mut grad_x = d_input_grad.slice(s![.., ..LINKAGE_DIM]).to_owned();

        let p_trace = predictor.model.forward_trace(x.clone());
        let (l_p, p_up) = mse_loss(p_trace.output(), &cond);
        if w_p > 0.0 {
            let (_, p_input_grad) = predictor.model.backward(&p_trace, &p_up);
            grad_x.scaled_add(w_p, &p_input_grad);
        }
        let (l_s, s_grad) = similarity_loss(&x);
        if w_s > 0.0 {
            grad_x.scaled_add(w_s, &s_grad);
        }
        let l_gps = l_g + w_p * l_p + w_s * l_s;
        if ![l_d, l_g, l_p, l_s, l_gps].iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step, message: format!("L_D={l_d} L_GPs={l_gps}") });
        }
        let (g_grads, _) = generator.model.backward(&g_trace, &grad_x);
        if !g_grads.is_finite() || !d_grads.is_finite() {
            return Err(Error::Divergence { step, message: "non-finite gradient".into() });
        }
        adam_step(&mut generator.model, &g_grads, &mut g_opt, config.lr_generator);

        if step % config.log_every == 0 || step + 1 == config.steps {
            history.push(GanLossReport { step, l_d, l_g, l_p, l_s, l_gps, w_p, w_s });
        }
        if config.snapshot_every > 0 && (step + 1) % config.snapshot_every == 0 {
            let score = score_generator(&generator, predictor, sampler, SCORE_BATCHES, b, score_seed);
            if best.as_ref().is_none_or(|(l, _, _)| score.l_p < *l) {
                best = Some((score.l_p, step, generator.clone()));
            }
        }
    }
    let last = config.steps.saturating_sub(1);
    let (generator, selected_step) = match best {
        Some((_, step, g)) => (g, step),
        None => (generator, last),
    };
    Ok(GanOutcome { generator, discriminator, history, selected_step })
}

/// One linkage per target condition (raw units), `z ~ N(0, I)` per sample.
pub fn synthesize(
    generator: &Generator,
    normalizer: &Normalizer,
    conditions: &[[f64; 2]],
    seed: u64,
) -> Vec<Linkage> {
    if conditions.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Vec<[f64; 2]> = conditions.iter().map(|&c| normalizer.conditions_to_unit(c)).collect();
    let z = generator.noise(unit.len(), &mut rng);
    let out = generator.model.forward(&Generator::input(&z, &rows_matrix(&unit)));
    out.outer_iter()
        .map(|r| normalizer.linkage_from_unit([r[0], r[1], r[2], r[3], r[4]]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub training: TrainingConfig,
    pub shape: NetworkShape,
    pub validation_fraction: f64,
    /// Cosine decay of the learning rate down to this fraction of its start.
    pub final_lr_fraction: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig { learning_rate: 2e-3, steps: 60_000, ..TrainingConfig::default() },
            shape: NetworkShape::default(),
            validation_fraction: 0.1,
            final_lr_fraction: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub n_train: usize,
    pub n_validation: usize,
    /// Raw-unit RMSE of `(d_max, eta_min)` on the held-out split.
    pub rmse: [f64; 2],
    pub r2: [f64; 2],
    pub validation_loss: f64,
    pub final_train_loss: f64,
}

/// Splits the dataset (seeded shuffle) into training and held-out indices.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * validation_fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Fits the surrogate on a 90/10 split and reports held-out accuracy.
pub fn train_predictor(
    dataset: &Dataset,
    normalizer: &Normalizer,
    config: &PredictorConfig,
) -> Result<(Predictor, PredictorReport)> {
    config.training.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Config("need at least two samples to train the predictor".into()));
    }
    let tc = &config.training;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut predictor = Predictor::new(config.shape, &mut rng);
    let mut opt = AdamState::new(&predictor.model, tc.adam);
    let data = training_matrix(dataset, normalizer);
    let (train_idx, val_idx) = split_indices(dataset.len(), config.validation_fraction, tc.seed);
    let x_all = data.slice(s![.., ..LINKAGE_DIM]);
    let y_all = data.slice(s![.., LINKAGE_DIM..]);

    let b = tc.batch_size.min(train_idx.len());
    let mut order = train_idx.clone();
    let mut cursor = order.len();
    let mut final_train_loss = f64::NAN;
    for step in 0..tc.steps {
        if cursor + b > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = &order[cursor..cursor + b];
        cursor += b;
        let x = x_all.select(Axis(0), batch);
        let y = y_all.select(Axis(0), batch);
        let trace = predictor.model.forward_trace(x);
        let (loss, up) = mse_loss(trace.output(), &y);
        if !loss.is_finite() {
            return Err(Error::Divergence { step, message: format!("predictor loss {loss}") });
        }
        let (grads, _) = predictor.model.backward(&trace, &up);
        let progress = step as f64 / tc.steps.max(1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let lr = tc.learning_rate
            * (config.final_lr_fraction + (1.0 - config.final_lr_fraction) * cosine);
        adam_step(&mut predictor.model, &grads, &mut opt, lr);
        final_train_loss = loss;
    }

    let eval_idx = if val_idx.is_empty() { &train_idx } else { &val_idx };
    let x_val = x_all.select(Axis(0), eval_idx);
    let y_val = y_all.select(Axis(0), eval_idx);
    let pred = predictor.model.forward(&x_val);
    let (validation_loss, _) = mse_loss(&pred, &y_val);
    if !validation_loss.is_finite() {
        return Err(Error::Divergence { step: tc.steps, message: "validation loss is not finite".into() });
    }
    let mut rmse = [0.0; 2];
    let mut r2 = [f64::NAN; 2];
    for k in 0..CONDITION_DIM {
        let aff = normalizer.conditions[k];
        let truth: Vec<f64> = y_val.column(k).iter().map(|&v| aff.invert(v)).collect();
        let est: Vec<f64> = pred.column(k).iter().map(|&v| aff.invert(v)).collect();
        rmse[k] = evaluation::rmse(&truth, &est);
        r2[k] = evaluation::r_squared(&truth, &est).unwrap_or(f64::NAN);
    }
    let report = PredictorReport {
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        rmse,
        r2,
        validation_loss,
        final_train_loss,
    };
    Ok((predictor, report))
}

const SCORE_SEED_MIX: u64 = 0x05EE_D0F5_C04E;
const SCORE_BATCHES: usize = 10;

/// Predictor and similarity losses of a trained generator on held-out
/// fake conditions, the quantities the grid search and ablation compare.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorScore {
    pub l_p: f64,
    pub l_s: f64,
}

pub fn score_generator(
    generator: &Generator,
    predictor: &Predictor,
    sampler: &ConditionSampler,
    batches: usize,
    batch_size: usize,
    seed: u64,
) -> GeneratorScore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut l_p, mut l_s) = (0.0, 0.0);
    for _ in 0..batches {
        let cond = sampler.sample_matrix(batch_size, &mut rng);
        let z = generator.noise(batch_size, &mut rng);
        let x = generator.model.forward(&Generator::input(&z, &cond));
        l_p += mse_loss(&predictor.model.forward(&x), &cond).0;
        l_s += similarity_loss(&x).0;
    }
    GeneratorScore { l_p: l_p / batches as f64, l_s: l_s / batches as f64 }
}

/// Axis values for the four tuned hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lr_generator: Vec<f64>,
    pub lr_discriminator: Vec<f64>,
    pub w_p: Vec<f64>,
    pub w_s: Vec<f64>,
}

impl GridSpec {
    pub const FULL_AXIS: [f64; 4] = [0.1, 0.01, 0.001, 0.0001];

    pub fn full() -> Self {
        let axis = Self::FULL_AXIS.to_vec();
        Self { lr_generator: axis.clone(), lr_discriminator: axis.clone(), w_p: axis.clone(), w_s: axis }
    }

    /// Two learning rates and the two largest weights per axis.
    pub fn smoke() -> Self {
        Self {
            lr_generator: vec![0.001, 0.0001],
            lr_discriminator: vec![0.001, 0.0001],
            w_p: vec![0.1, 0.01],
            w_s: vec![0.1, 0.01],
        }
    }

    /// Cells `(lr_g, lr_d, w_p, w_s)`; disabled losses collapse their axis to 0.
    pub fn cells(&self, flags: LossFlags) -> Vec<[f64; 4]> {
        let w_p = if flags.use_predictor_loss { self.w_p.clone() } else { vec![0.0] };
        let w_s = if flags.use_similarity_loss { self.w_s.clone() } else { vec![0.0] };
        let mut cells = Vec::new();
        for &g in &self.lr_generator {
            for &d in &self.lr_discriminator {
                for &p in &w_p {
                    for &s in &w_s {
                        cells.push([g, d, p, s]);
                    }
                }
            }
        }
        cells
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridCell {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub w_p: f64,
    pub w_s: f64,
    pub score: Option<GeneratorScore>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridReport {
    pub flags: LossFlags,
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the lowest held-out predictor loss.
    pub best: Option<usize>,
    #[serde(skip)]
    pub best_generator: Option<Generator>,
}

impl GridReport {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn best_config(&self, base: &GanConfig) -> Option<GanConfig> {
        self.best_cell().map(|c| GanConfig {
            lr_generator: c.lr_generator,
            lr_discriminator: c.lr_discriminator,
            w_p: c.w_p,
            w_s: c.w_s,
            ..base.clone()
        })
    }
}

/// Trains one model per grid cell and keeps the one with the lowest
/// held-out predictor loss. A diverging cell is recorded, not fatal.
pub fn hyperparameter_grid_search(
    dataset: &Dataset,
    normalizer: &Normalizer,
    predictor: &Predictor,
    sampler: &ConditionSampler,
    base: &GanConfig,
    grid: &GridSpec,
    flags: LossFlags,
) -> GridReport {
    let score_seed = base.seed ^ SCORE_SEED_MIX;
    let results: Vec<(GridCell, Option<Generator>)> = grid
        .cells(flags)
        .into_par_iter()
        .map(|[g, d, p, s]| {
            let config = GanConfig { lr_generator: g, lr_discriminator: d, w_p: p, w_s: s, ..base.clone() };
            let mut cell = GridCell { lr_generator: g, lr_discriminator: d, w_p: p, w_s: s, score: None, error: None };
            match train_cgan(dataset, normalizer, predictor, sampler, &config, flags) {
                Ok(outcome) => {
                    let score =
                        score_generator(&outcome.generator, predictor, sampler, SCORE_BATCHES, base.batch_size, score_seed);
                    if score.l_p.is_finite() {
                        cell.score = Some(score);
                        return (cell, Some(outcome.generator));
                    }
                    cell.error = Some("non-finite held-out predictor loss".into());
                    (cell, None)
                }
                Err(e) => {
                    cell.error = Some(e.to_string());
                    (cell, None)
                }
            }
        })
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, (c, _))| c.score.map(|s| (i, s.l_p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let mut cells = Vec::with_capacity(results.len());
    let mut best_generator = None;
    for (i, (cell, generator)) in results.into_iter().enumerate() {
        if Some(i) == best {
            best_generator = generator;
        }
        cells.push(cell);
    }
    GridReport { flags, cells, best, best_generator }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn similarity_loss_of_identical_rows_is_zero() {
        let x = Array2::from_elem((4, 5), 0.3);
        let (l, g) = similarity_loss(&x);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn similarity_loss_two_rows() {
        let x = array![[0.0, 0.0, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0, 0.0]];
        let (l, _) = similarity_loss(&x);
        assert!((l + 0.2).abs() < 1e-15);
    }

    #[test]
    fn similarity_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((6, 5), || rng.random::<f64>());
        let (_, g) = similarity_loss(&x);
        let h = 1e-7;
        for i in 0..6 {
            for c in 0..5 {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[[i, c]] += h;
                down[[i, c]] -= h;
                let fd = (similarity_loss(&up).0 - similarity_loss(&down).0) / (2.0 * h);
                assert!((fd - g[[i, c]]).abs() < 1e-6, "({i},{c}) {fd} vs {}", g[[i, c]]);
            }
        }
    }

    #[test]
    fn sampler_outputs_lie_on_segment() {
        let sampler = ConditionSampler::new(vec![[0.0, 0.0], [1.0, 2.0]], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in sampler.sample(200, &mut rng) {
            assert!((c[1] - 2.0 * c[0]).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&c[0]));
        }
    }

    #[test]
    fn single_point_sampler_repeats_it() {
        let sampler = ConditionSampler::new(vec![[0.4, 0.6]], 5);
        assert_eq!(sampler.k(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sampler.sample(10, &mut rng).iter().all(|&c| c == [0.4, 0.6]));
    }

    #[test]
    fn grid_cells_follow_flags() {
        let grid = GridSpec::full();
        assert_eq!(grid.cells(AblationModel::A.flags()).len(), 16);
        assert_eq!(grid.cells(AblationModel::B.flags()).len(), 64);
        assert_eq!(grid.cells(AblationModel::D.flags()).len(), 256);
        assert!(grid.cells(AblationModel::C.flags()).iter().all(|c| c[2] == 0.0));
    }

    #[test]
    fn split_is_ninety_ten() {
        let (train, val) = split_indices(1000, 0.1, 3);
        assert_eq!((train.len(), val.len()), (900, 100));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }
}
