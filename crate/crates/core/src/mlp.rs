//! Fully connected ReLU classifier trained with Adam on a cross-entropy
//! objective, plus versioned JSON checkpoints.
//!
//! The network maps a normalized feature vector to one logit per beam.
//! Hidden layers use He-scaled Gaussian initialization; the output layer is
//! standard normal; biases start at zero. Training shuffles each epoch with
//! a seeded generator and steps the learning rate down at fixed epochs, so a
//! given seed reproduces a run exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExampleMatrix, FeatureSet, Normalizer, SplitSpec};
use crate::error::{Error, Result};
use crate::oracle::top_k_indices;
use crate::{real, Real};

/// Layer widths of the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpArchitecture {
    /// Two hidden layers of 512 units each.
    pub fn with_defaults(input_dim: usize, output_dim: usize) -> Self {
        MlpArchitecture {
            input_dim,
            hidden: vec![512, 512],
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// Widths of consecutive layers, inputs first.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Weights and biases; weight `l` has shape `(fan_in, fan_out)` and acts as
/// `z = a · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    arch: MlpArchitecture,
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
}

impl<T: Real> MlpModel<T> {
    /// Seeded random initialization: hidden weights `N(0, 2/fan_in)`, output
    /// weights `N(0, 1)`, all biases zero.
    pub fn new(arch: MlpArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = arch.layer_dims();
        let last = arch.num_layers() - 1;
        let mut weights = Vec::with_capacity(arch.num_layers());
        let mut biases = Vec::with_capacity(arch.num_layers());
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = if l == last {
                T::one()
            } else {
                real::<T>(2.0 / fan_in as f64).sqrt()
            };
            let weight =
                Array2::from_shape_fn((fan_in, fan_out), |_| T::sample_normal(&mut rng) * std);
            weights.push(weight);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpModel {
            arch,
            weights,
            biases,
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    /// Mutable parameter access for external optimizers and probes. Shapes
    /// must stay consistent with [`MlpModel::arch`] (see `validate_shapes`).
    pub fn weights_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<T>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn validate_shapes(&self) -> Result<()> {
        self.arch.validate()?;
        let dims = self.arch.layer_dims();
        if self.weights.len() != self.arch.num_layers()
            || self.biases.len() != self.arch.num_layers()
        {
            return Err(Error::data("layer count does not match architecture"));
        }
        for (l, pair) in dims.windows(2).enumerate() {
            if self.weights[l].dim() != (pair[0], pair[1]) || self.biases[l].len() != pair[1] {
                return Err(Error::data(format!(
                    "layer {l} parameters do not match architecture"
                )));
            }
        }
        if self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::numeric("model parameters are not finite"));
        }
        Ok(())
    }

    /// Pre-activation outputs of every layer plus post-ReLU activations of
    /// the hidden layers (`activations[0]` is the input itself).
    fn forward_cached(&self, x: &Array2<T>) -> (Vec<Array2<T>>, Array2<T>) {
        let mut activations = vec![x.clone()];
        let last = self.arch.num_layers() - 1;
        for l in 0..last {
            let mut z = activations[l].dot(&self.weights[l]);
            z += &self.biases[l];
            z.mapv_inplace(|v| v.max(T::zero()));
            activations.push(z);
        }
        let mut logits = activations[last].dot(&self.weights[last]);
        logits += &self.biases[last];
        (activations, logits)
    }

    /// Logits for a batch of feature rows.
    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::data(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(self.forward_cached(x).1)
    }

    /// Beam indices of each row's `k` largest logits, best first; logit ties
    /// break toward the lower index.
    pub fn predict_topk(&self, x: &Array2<T>, k: usize) -> Result<Vec<Vec<usize>>> {
        let logits = self.forward(x)?;
        logits
            .rows()
            .into_iter()
            .map(|row| top_k_indices(row.as_slice().expect("row-major logits"), k))
            .collect()
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// Mean cross-entropy of a batch (log-sum-exp stabilized) and its exact
/// gradients with respect to every parameter.
pub fn loss_and_gradients<T: Real>(
    model: &MlpModel<T>,
    x: &Array2<T>,
    labels: &[usize],
) -> Result<(T, Gradients<T>)> {
    if x.nrows() == 0 {
        return Err(Error::data("empty batch"));
    }
    if x.nrows() != labels.len() {
        return Err(Error::data("batch features and labels must align"));
    }
    if x.ncols() != model.arch.input_dim {
        return Err(Error::data(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            model.arch.input_dim
        )));
    }
    let out = model.arch.output_dim;
    if let Some(&bad) = labels.iter().find(|&&y| y >= out) {
        return Err(Error::data(format!(
            "label {bad} outside the {out}-way output"
        )));
    }

    let (activations, logits) = model.forward_cached(x);
    let n = x.nrows();
    let inv_n = T::one() / real::<T>(n as f64);

    // Softmax probabilities and the mean stabilized cross-entropy.
    let mut delta = logits;
    let mut loss = T::zero();
    // Saturated softmax tails decay toward the subnormal range, where x86
    // arithmetic leaves the hardware fast path and training slows several
    // fold. Flushing magnitudes below sqrt(MIN_NORMAL) keeps every
    // downstream product out of that range and is exact for every
    // practical purpose (< 1e-154 in f64).
    let tiny = T::min_positive_value().sqrt();
    for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let label_logit = row[labels[i]];
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss += sum.ln() + max - label_logit;
        for v in row.iter_mut() {
            *v /= sum;
        }
        row[labels[i]] -= T::one();
        for v in row.iter_mut() {
            *v *= inv_n;
            if v.abs() < tiny {
                *v = T::zero();
            }
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::numeric("loss is not finite"));
    }

    let layers = model.arch.num_layers();
    let mut weight_grads = vec![Array2::zeros((0, 0)); layers];
    let mut bias_grads = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        weight_grads[l] = activations[l].t().dot(&delta);
        bias_grads[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&model.weights[l].t());
            // ReLU passes gradient only where the activation was positive.
            upstream.zip_mut_with(&activations[l], |g, a| {
                if *a <= T::zero() {
                    *g = T::zero();
                }
            });
            delta = upstream;
        }
    }
    Ok((
        loss,
        Gradients {
            weights: weight_grads,
            biases: bias_grads,
        },
    ))
}

/// Training hyperparameters. Defaults: batches of 32, Adam at 1e-2 decaying
/// tenfold at epochs 20/40/80, 100 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-2,
            decay_epochs: vec![20, 40, 80],
            decay_factor: 0.1,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("decay_factor must be in (0, 1]"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if !self.decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("decay_epochs must be strictly increasing"));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::config(format!("{name} must be in [0, 1)")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_epsilon must be positive"));
        }
        Ok(())
    }

    /// Learning rate in force during `epoch` (0-based): the base rate times
    /// `decay_factor` once per decay epoch already reached.
    pub fn learning_rate_for_epoch(&self, epoch: usize) -> f64 {
        let steps = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m_weights: Vec<Array2<T>>,
    m_biases: Vec<Array1<T>>,
    v_weights: Vec<Array2<T>>,
    v_biases: Vec<Array1<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &MlpModel<T>) -> Self {
        AdamState {
            m_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            step: 0,
        }
    }
}

/// One Adam update of every parameter with the given learning rate.
pub fn adam_step<T: Real>(
    model: &mut MlpModel<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    learning_rate: f64,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let lr = real::<T>(learning_rate);
    let b1 = real::<T>(cfg.adam_beta1);
    let b2 = real::<T>(cfg.adam_beta2);
    let eps = real::<T>(cfg.adam_epsilon);
    let t = state.step as i32;
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);

    // Once a coordinate's gradient goes quiet its moments decay
    // exponentially toward the subnormal range, where x86 arithmetic is
    // microcoded; flush them to zero at that boundary so they settle
    // instead of drifting through it for hundreds of steps.
    let min_normal = T::min_positive_value();
    let update = |param: &mut T, grad: T, m: &mut T, v: &mut T| {
        *m = b1 * *m + (T::one() - b1) * grad;
        *v = b2 * *v + (T::one() - b2) * grad * grad;
        if m.abs() < min_normal {
            *m = T::zero();
        }
        if v.abs() < min_normal {
            *v = T::zero();
        }
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for l in 0..model.weights.len() {
        for ((param, &grad), (m, v)) in model.weights[l]
            .iter_mut()
            .zip(grads.weights[l].iter())
            .zip(state.m_weights[l].iter_mut().zip(state.v_weights[l].iter_mut()))
        {
            update(param, grad, m, v);
        }
        for ((param, &grad), (m, v)) in model.biases[l]
            .iter_mut()
            .zip(grads.biases[l].iter())
            .zip(state.m_biases[l].iter_mut().zip(state.v_biases[l].iter_mut()))
        {
            update(param, grad, m, v);
        }
    }
}

/// Mean loss of each completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<T> {
    pub epoch_losses: Vec<T>,
}

/// Train in place: every epoch reshuffles with a generator seeded from
/// `cfg.seed`, walks the data in batches (the final short batch included),
/// and applies Adam at that epoch's learning rate.
pub fn train<T: Real>(
    model: &mut MlpModel<T>,
    data: &ExampleMatrix<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    if data.features.ncols() != model.arch.input_dim {
        return Err(Error::data(format!(
            "data has {} features, model expects {}",
            data.features.ncols(),
            model.arch.input_dim
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= model.arch.output_dim) {
        return Err(Error::data(format!(
            "label {bad} outside the {}-way output",
            model.arch.output_dim
        )));
    }

    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::new(model);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_for_epoch(epoch);
        order.shuffle(&mut rng);
        let mut weighted_loss = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let batch_x = data.features.select(Axis(0), chunk);
            let batch_y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = loss_and_gradients(model, &batch_x, &batch_y)?;
            adam_step(model, &grads, &mut state, lr, cfg);
            weighted_loss += loss * real::<T>(chunk.len() as f64);
        }
        epoch_losses.push(weighted_loss / real::<T>(n as f64));
    }
    model.validate_shapes()?;
    Ok(TrainReport { epoch_losses })
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to reload and apply a trained classifier: the model,
/// the feature set and normalization it expects, the training
/// hyperparameters, the train/test partition it was fitted under, and the
/// provenance of the generating run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub feature_set: FeatureSet,
    pub model: MlpModel<T>,
    pub normalizer: Normalizer<T>,
    pub train_config: TrainConfig,
    pub split: SplitSpec,
    pub config_hash: String,
    pub master_seed: u64,
}

impl<T: Real> Checkpoint<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: MlpModel<T>,
        feature_set: FeatureSet,
        normalizer: Normalizer<T>,
        train_config: TrainConfig,
        split: SplitSpec,
        config_hash: String,
        master_seed: u64,
    ) -> Result<Self> {
        if feature_set.feature_dim() != model.arch.input_dim {
            return Err(Error::data(format!(
                "{feature_set} has {} features but the model takes {}",
                feature_set.feature_dim(),
                model.arch.input_dim
            )));
        }
        if normalizer.dim() != model.arch.input_dim {
            return Err(Error::data("normalizer does not match the model input"));
        }
        model.validate_shapes()?;
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            feature_set,
            model,
            normalizer,
            train_config,
            split,
            config_hash,
            master_seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.feature_set.feature_dim() != self.model.arch.input_dim
            || self.normalizer.dim() != self.model.arch.input_dim
        {
            return Err(Error::data("checkpoint metadata does not match the model"));
        }
        self.model.validate_shapes()
    }
}

pub fn save_checkpoint<T: Real, W: Write>(writer: W, checkpoint: &Checkpoint<T>) -> Result<()> {
    checkpoint.validate()?;
    serde_json::to_writer(writer, checkpoint)
        .map_err(|e| Error::data(format!("cannot serialize checkpoint: {e}")))
}

pub fn load_checkpoint<T: Real, R: Read>(reader: R) -> Result<Checkpoint<T>> {
    let checkpoint: Checkpoint<T> = serde_json::from_reader(reader)
        .map_err(|e| Error::data(format!("cannot parse checkpoint: {e}")))?;
    checkpoint.validate()?;
    Ok(checkpoint)
}

/// Write a checkpoint through a temporary file and rename, so a crash never
/// leaves a truncated artifact behind.
pub fn save_checkpoint_file<T: Real>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let file = std::fs::File::create(&tmp)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", tmp.display())))?;
    save_checkpoint(std::io::BufWriter::new(file), checkpoint)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| Error::data(format!("cannot move checkpoint into place: {e}")))?;
    Ok(())
}

pub fn load_checkpoint_file<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    load_checkpoint(std::io::BufReader::new(file))
}
