//! The superpixel classifier: an MLP over `[mask prior, features]` rows with
//! ReLU hidden layers and a single sigmoid output, trained by plain SGD on
//! cross entropy jointly with the feature projection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{
    project_backward, project_forward, FeatureStackConfig, LinearProjection,
};
use crate::pooling::FeatureTable;
use crate::sampling::SuperpixelBatch;

/// Probability clamp used inside the cross-entropy loss.
const P_CLAMP: f64 = 1e-7;

/// One fully-connected layer, row-major `d_out x d_in` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// MLP parameters: hidden layers plus the final 1-unit sigmoid layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// He-scaled random weights and zero biases for hidden widths `widths`
/// followed by a 1-unit output layer. Deterministic per seed.
pub fn mlp_init(widths: &[usize], input_dim: usize, seed: u64) -> Result<MlpParams> {
    if widths.is_empty() {
        return Err(Error::invalid_input("hidden widths must be nonempty"));
    }
    if input_dim == 0 || widths.contains(&0) {
        return Err(Error::invalid_input("zero layer dimension"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut d_in = input_dim;
    for &d_out in widths.iter().chain(std::iter::once(&1usize)) {
        let normal = Normal::new(0.0, (2.0 / d_in as f64).sqrt()).expect("valid std");
        let weight = (0..d_out * d_in).map(|_| normal.sample(&mut rng)).collect();
        layers.push(DenseLayer { d_in, d_out, weight, bias: vec![0.0; d_out] });
        d_in = d_out;
    }
    Ok(MlpParams { layers })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward pass over a flat row-major batch; returns one probability per row.
pub fn mlp_forward(params: &MlpParams, rows: &[f64], row_width: usize) -> Result<Vec<f64>> {
    let cache = forward_cache(params, rows, row_width)?;
    Ok(cache.probabilities)
}

struct ForwardCache {
    /// Post-activation values per layer, starting with the input rows.
    activations: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    n_rows: usize,
}

fn forward_cache(params: &MlpParams, rows: &[f64], row_width: usize) -> Result<ForwardCache> {
    if row_width != params.input_dim() {
        return Err(Error::dimension_mismatch(format!(
            "rows have width {}, classifier expects {}",
            row_width,
            params.input_dim()
        )));
    }
    if row_width == 0 || !rows.len().is_multiple_of(row_width) {
        return Err(Error::dimension_mismatch("ragged row buffer"));
    }
    let n_rows = rows.len() / row_width;
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(rows.to_vec());

    let last = params.layers.len() - 1;
    for (li, layer) in params.layers.iter().enumerate() {
        let input = activations.last().unwrap();
        let mut out = vec![0.0; n_rows * layer.d_out];
        for r in 0..n_rows {
            let x = &input[r * layer.d_in..(r + 1) * layer.d_in];
            for o in 0..layer.d_out {
                let wrow = &layer.weight[o * layer.d_in..(o + 1) * layer.d_in];
                let mut z = layer.bias[o];
                for (a, b) in x.iter().zip(wrow) {
                    z += a * b;
                }
                out[r * layer.d_out + o] = if li == last { sigmoid(z) } else { z.max(0.0) };
            }
        }
        activations.push(out);
    }
    let probabilities = activations.last().unwrap().clone();
    Ok(ForwardCache { activations, probabilities, n_rows })
}

/// Mean binary cross entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::dimension_mismatch("probabilities vs labels"));
    }
    if probabilities.is_empty() {
        return Err(Error::invalid_input("empty batch"));
    }
    let mut total = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels) {
        let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / probabilities.len() as f64)
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<DenseLayer>,
}

/// Exact gradients of `w_spx * weighted-mean BCE` composed with the forward
/// pass. Returns the gradients, the gradient w.r.t. the input rows (used to
/// train the projection), and the loss value.
pub fn mlp_backward(
    params: &MlpParams,
    rows: &[f64],
    row_width: usize,
    labels: &[f64],
    w_spx: f64,
    positive_weight: f64,
) -> Result<(MlpGradients, Vec<f64>, f64)> {
    let cache = forward_cache(params, rows, row_width)?;
    if labels.len() != cache.n_rows {
        return Err(Error::dimension_mismatch("labels vs rows"));
    }
    let n = cache.n_rows as f64;

    let mut loss = 0.0;
    // dL/dz at the sigmoid output; zero where the clamp saturates the loss.
    let mut delta: Vec<f64> = Vec::with_capacity(cache.n_rows);
    for (&p, &y) in cache.probabilities.iter().zip(labels) {
        let weight = if y > 0.5 { positive_weight } else { 1.0 };
        let pc = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        loss -= weight * (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        let d = if p <= P_CLAMP || p >= 1.0 - P_CLAMP {
            0.0
        } else {
            p - y
        };
        delta.push(w_spx * weight * d / n);
    }
    loss = w_spx * loss / n;

    let mut grads = MlpGradients {
        layers: params
            .layers
            .iter()
            .map(|l| DenseLayer {
                d_in: l.d_in,
                d_out: l.d_out,
                weight: vec![0.0; l.weight.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect(),
    };

    // Backprop through layers, last to first. `delta` holds dL/dz of the
    // current layer (post-ReLU derivative already applied for hidden layers).
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input = &cache.activations[li];
        let grad = &mut grads.layers[li];
        let mut delta_prev = vec![0.0; cache.n_rows * layer.d_in];
        for r in 0..cache.n_rows {
            let x = &input[r * layer.d_in..(r + 1) * layer.d_in];
            let dp = &mut delta_prev[r * layer.d_in..(r + 1) * layer.d_in];
            for o in 0..layer.d_out {
                let d = delta[r * layer.d_out + o];
                if d == 0.0 {
                    continue;
                }
                grad.bias[o] += d;
                let wrow = &layer.weight[o * layer.d_in..(o + 1) * layer.d_in];
                let grow = &mut grad.weight[o * layer.d_in..(o + 1) * layer.d_in];
                for i in 0..layer.d_in {
                    grow[i] += d * x[i];
                    dp[i] += d * wrow[i];
                }
            }
        }
        if li > 0 {
            // ReLU derivative gates the signal entering the previous layer.
            for (dp, &a) in delta_prev.iter_mut().zip(input.iter()) {
                if a <= 0.0 {
                    *dp = 0.0;
                }
            }
        }
        delta = delta_prev;
    }

    Ok((grads, delta, loss))
}

/// Elementwise `p <- p - lr * g`.
pub fn sgd_step(params: &mut MlpParams, grads: &MlpGradients, lr: f64) -> Result<()> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::dimension_mismatch("gradient layer count"));
    }
    for (layer, grad) in params.layers.iter_mut().zip(&grads.layers) {
        if layer.weight.len() != grad.weight.len() || layer.bias.len() != grad.bias.len() {
            return Err(Error::dimension_mismatch("gradient layer shape"));
        }
        for (p, g) in layer.weight.iter_mut().zip(&grad.weight) {
            *p -= lr * g;
        }
        for (p, g) in layer.bias.iter_mut().zip(&grad.bias) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the superpixel classification loss.
    pub w_spx: f64,
    pub epochs: u32,
    pub minibatch: usize,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    /// Projection output width (MLP input is this plus one prior column).
    pub d_out: usize,
    /// Optional loss weight for positive rows.
    pub positive_weight: Option<f64>,
    /// Classification threshold stored in the trained model.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0001,
            w_spx: 1.0,
            epochs: 20,
            minibatch: 64,
            seed: 0,
            hidden_widths: vec![512, 512, 512],
            d_out: 64,
            positive_weight: None,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("hidden widths must be nonempty".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be >= 1".into()));
        }
        if self.d_out == 0 {
            return Err(Error::Config("d_out must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Labeled training rows: per row the mask prior, the RAW pooled feature
/// vector (projection applied inside the training loop so its parameters can
/// learn) and the binary label.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub d_raw: usize,
    pub priors: Vec<f64>,
    /// Row-major `n x d_raw`.
    pub raw: Vec<f64>,
    pub labels: Vec<u8>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Append the rows of a labeled batch whose feature columns are RAW
    /// pooled features.
    pub fn push_batch(&mut self, batch: &SuperpixelBatch) -> Result<()> {
        let labels = batch
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid_input("training batch has no labels"))?;
        if self.d_raw == 0 {
            self.d_raw = batch.feature_dim;
        } else if self.d_raw != batch.feature_dim {
            return Err(Error::dimension_mismatch("batches disagree on feature width"));
        }
        for (r, &label) in labels.iter().enumerate() {
            let row = batch.row(r);
            self.priors.push(row[0]);
            self.raw.extend_from_slice(&row[1..]);
            self.labels.push(label);
        }
        Ok(())
    }
}

/// Per-training-run bookkeeping stored in the model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub epoch_loss: Vec<f64>,
    pub rows: usize,
    pub positives: usize,
    /// Set when the training set contained only one class.
    pub single_class: bool,
}

/// Everything needed to classify superpixels: the projection, the MLP, the
/// feature recipe and the probability threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub projection: LinearProjection,
    pub mlp: MlpParams,
    pub feature_cfg: FeatureStackConfig,
    pub threshold: f64,
    pub seed: u64,
    pub stats: TrainingStats,
}

impl TrainedModel {
    /// Classify a batch whose feature columns are already projected
    /// (`row = [prior, projected features]`).
    pub fn classify(&self, batch: &SuperpixelBatch) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        mlp_forward(&self.mlp, &batch.data, batch.row_width())
    }

    /// Project a raw pooled feature table with the model's projection.
    pub fn project(&self, raw: &FeatureTable) -> Result<FeatureTable> {
        project_forward(raw, &self.projection)
    }
}

/// Round every parameter through `f32`, the model file precision, so that a
/// saved-and-reloaded model classifies bit-identically to the in-memory one.
fn quantize_params(projection: &mut LinearProjection, mlp: &mut MlpParams) {
    let q = |v: &mut f64| *v = *v as f32 as f64;
    projection.weight.iter_mut().for_each(q);
    projection.bias.iter_mut().for_each(q);
    for layer in &mut mlp.layers {
        layer.weight.iter_mut().for_each(q);
        layer.bias.iter_mut().for_each(q);
    }
}

/// Train the projection and the MLP jointly with SGD on cross entropy.
/// Deterministic for a fixed config (seeded init and shuffle).
pub fn train(dataset: &TrainingSet, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_features(dataset, config, FeatureStackConfig::default())
}

pub fn train_with_features(
    dataset: &TrainingSet,
    config: &TrainConfig,
    feature_cfg: FeatureStackConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid_input("empty training set"));
    }
    let positives = dataset.labels.iter().filter(|&&l| l != 0).count();
    let single_class = positives == 0 || positives == dataset.len();

    let mut projection = LinearProjection::init(dataset.d_raw, config.d_out, config.seed)?;
    let mut mlp = mlp_init(&config.hidden_widths, config.d_out + 1, config.seed.wrapping_add(1))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));

    let n = dataset.len();
    let positive_weight = config.positive_weight.unwrap_or(1.0);
    let mut epoch_loss = Vec::with_capacity(config.epochs as usize);
    let mut order: Vec<usize> = (0..n).collect();

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.minibatch) {
            let m = chunk.len();
            // Gather raw rows and project them with the current parameters.
            let mut raw = FeatureTable::zeros(m, dataset.d_raw, 0);
            let mut labels = Vec::with_capacity(m);
            for (r, &idx) in chunk.iter().enumerate() {
                raw.row_mut(r)
                    .copy_from_slice(&dataset.raw[idx * dataset.d_raw..(idx + 1) * dataset.d_raw]);
                labels.push(dataset.labels[idx] as f64);
            }
            let projected = project_forward(&raw, &projection)?;

            let width = config.d_out + 1;
            let mut rows = vec![0.0; m * width];
            for (r, &idx) in chunk.iter().enumerate() {
                rows[r * width] = dataset.priors[idx];
                rows[r * width + 1..(r + 1) * width].copy_from_slice(projected.row(r));
            }

            let (grads, grad_rows, loss) =
                mlp_backward(&mlp, &rows, width, &labels, config.w_spx, positive_weight)?;

            // Split the input gradient: column 0 is the prior (not learned),
            // the rest flows into the projection.
            let mut grad_proj_out = FeatureTable::zeros(m, config.d_out, 0);
            for r in 0..m {
                grad_proj_out
                    .row_mut(r)
                    .copy_from_slice(&grad_rows[r * width + 1..(r + 1) * width]);
            }
            let (proj_grad, _) = project_backward(&grad_proj_out, &raw, &projection)?;

            sgd_step(&mut mlp, &grads, config.learning_rate)?;
            for (p, g) in projection.weight.iter_mut().zip(&proj_grad.weight) {
                *p -= config.learning_rate * g;
            }
            for (p, g) in projection.bias.iter_mut().zip(&proj_grad.bias) {
                *p -= config.learning_rate * g;
            }

            loss_sum += loss * m as f64;
        }
        epoch_loss.push(loss_sum / n as f64);
    }

    quantize_params(&mut projection, &mut mlp);
    Ok(TrainedModel {
        projection,
        mlp,
        feature_cfg,
        threshold: config.threshold,
        seed: config.seed,
        stats: TrainingStats {
            epoch_loss,
            rows: n,
            positives,
            single_class,
        },
    })
}
