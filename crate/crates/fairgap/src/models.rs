//! Binary logistic regression and feed-forward ReLU networks with
//! inverted dropout: forward pass, analytic backprop, parameter
//! initialization, and mini-batch SGD training against the
//! fairness-regularized loss.

use crate::error::{Error, Result};
use crate::mitigation::{batch_objective, MitigationConfig};
use crate::rng::{derive_seed, stream};
use crate::tabular::Dataset;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Blr,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    XavierUniform,
    HeNormal,
}

/// Architecture description. The hidden fields are ignored for BLR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub dropout_rate: f64,
    pub init: Init,
}

impl ModelSpec {
    pub fn blr() -> Self {
        Self {
            kind: ModelKind::Blr,
            hidden_layers: 0,
            hidden_width: 0,
            dropout_rate: 0.0,
            init: Init::XavierUniform,
        }
    }

    /// Default network: 3 hidden layers, 200 units each, dropout 0.01.
    pub fn mlp() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_layers: 3,
            hidden_width: 200,
            dropout_rate: 0.01,
            init: Init::XavierUniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::Mlp && (self.hidden_layers == 0 || self.hidden_width == 0) {
            return Err(Error::Config(
                "MLP needs hidden_layers >= 1 and hidden_width >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every affine layer, input to output.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::Blr => vec![(input_dim, 1)],
            ModelKind::Mlp => {
                let w = self.hidden_width;
                let mut dims = vec![(input_dim, w)];
                dims.extend(std::iter::repeat((w, w)).take(self.hidden_layers - 1));
                dims.push((w, 1));
                dims
            }
        }
    }
}

/// Learned parameters: one (fan_out x fan_in) weight matrix and bias
/// vector per affine layer. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ModelState {
    fn zeros_like(&self) -> ModelState {
        ModelState {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Xavier-uniform or He-normal weight initialization; biases zero.
pub fn init_params(spec: &ModelSpec, input_dim: usize, seed: u64) -> ModelState {
    let mut rng = stream(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (fan_in, fan_out) in spec.layer_dims(input_dim) {
        let w = match spec.init {
            Init::XavierUniform => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound))
            }
            Init::HeNormal => {
                let std = (2.0 / fan_in as f64).sqrt();
                Array2::from_shape_fn((fan_out, fan_in), |_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * std
                })
            }
        };
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    ModelState { weights, biases }
}

/// Forward-pass evaluation mode.
pub enum ForwardMode<'a> {
    /// Sample fresh inverted-dropout masks from the stream.
    Train(&'a mut ChaCha8Rng),
    /// No dropout, no scaling; deterministic.
    Eval,
    /// Reuse previously sampled masks (gradient checking).
    Frozen(&'a [Array2<f64>]),
}

/// Retained intermediates for the backward pass.
pub struct ForwardCache {
    /// Input to each affine layer (layer 0's input is the batch itself).
    layer_inputs: Vec<Array2<f64>>,
    /// Pre-activation outputs of each hidden layer.
    pre_activations: Vec<Array2<f64>>,
    /// Inverted-dropout masks (0 or 1/(1-rate)); empty in Eval mode.
    pub masks: Vec<Array2<f64>>,
    pub probs: Array1<f64>,
}

fn sigmoid(v: f64) -> f64 {
    let p = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-15, 1.0 - 1e-15)
}

/// Forward pass over a batch; returns probabilities and the cache for
/// backprop.
pub fn forward(
    state: &ModelState,
    spec: &ModelSpec,
    x: &Array2<f64>,
    mode: ForwardMode,
) -> Result<(Array1<f64>, ForwardCache)> {
    let n_layers = state.weights.len();
    if x.ncols() != state.weights[0].ncols() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns, model expects {}",
            x.ncols(),
            state.weights[0].ncols()
        )));
    }
    let mut mode = mode;
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut masks = Vec::new();
    let mut h = x.clone();
    for l in 0..n_layers - 1 {
        let a = h.dot(&state.weights[l].t()) + &state.biases[l];
        layer_inputs.push(h);
        let mut out = a.mapv(|v| v.max(0.0));
        match &mut mode {
            ForwardMode::Train(rng) if spec.dropout_rate > 0.0 => {
                let keep = 1.0 - spec.dropout_rate;
                let scale = 1.0 / keep;
                let mask = Array2::from_shape_fn(out.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                out *= &mask;
                masks.push(mask);
            }
            ForwardMode::Frozen(given) => {
                out *= &given[l];
                masks.push(given[l].clone());
            }
            _ => {}
        }
        pre_activations.push(a);
        h = out;
    }
    let last = n_layers - 1;
    let logits = h.dot(&state.weights[last].t()) + &state.biases[last];
    layer_inputs.push(h);
    let probs: Array1<f64> = logits.column(0).mapv(sigmoid);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("forward pass output"));
    }
    Ok((
        probs.clone(),
        ForwardCache {
            layer_inputs,
            pre_activations,
            masks,
            probs,
        },
    ))
}

/// Backprop dL/dp through sigmoid, dropout, ReLU and the affine layers;
/// returns gradients shaped like the state.
pub fn backward(
    state: &ModelState,
    spec: &ModelSpec,
    cache: &ForwardCache,
    dl_dp: &[f64],
) -> ModelState {
    let n_layers = state.weights.len();
    let n = cache.probs.len();
    let mut grad = state.zeros_like();
    // dL/dv = dL/dp * p(1-p)
    let mut delta = Array2::from_shape_fn((n, 1), |(i, _)| {
        let p = cache.probs[i];
        dl_dp[i] * p * (1.0 - p)
    });
    for l in (0..n_layers).rev() {
        grad.weights[l] = delta.t().dot(&cache.layer_inputs[l]);
        grad.biases[l] = delta.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&state.weights[l]);
        if spec.dropout_rate > 0.0 && !cache.masks.is_empty() {
            upstream *= &cache.masks[l - 1];
        }
        let pre = &cache.pre_activations[l - 1];
        upstream.zip_mut_with(pre, |u, &a| {
            if a <= 0.0 {
                *u = 0.0;
            }
        });
        delta = upstream;
    }
    grad
}

/// In-place SGD update: theta <- theta - step * grad.
pub fn sgd_step(state: &mut ModelState, grad: &ModelState, step_size: f64) {
    for (w, g) in state.weights.iter_mut().zip(&grad.weights) {
        w.scaled_add(-step_size, g);
    }
    for (b, g) in state.biases.iter_mut().zip(&grad.biases) {
        b.scaled_add(-step_size, g);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub step_size: f64,
    pub epochs: usize,
    pub mitigation: MitigationConfig,
    pub seed: u64,
    /// Select the best epoch by total loss (primary + penalty) rather
    /// than the primary component alone.
    pub select_by_total: bool,
}

impl TrainConfig {
    /// Training protocol defaults: batch 1000, 50 epochs, step 0.1 on
    /// the mean-form objective (the same dynamics as step 1e-4 on the
    /// per-batch sum at batch size 1000, but keeping the primary and
    /// fairness terms on a common scale).
    pub fn new(mitigation: MitigationConfig, seed: u64) -> Self {
        Self {
            batch_size: 1000,
            step_size: 0.1,
            epochs: 50,
            mitigation,
            seed,
            select_by_total: true,
        }
    }
}

/// One epoch-level loss snapshot over the full training set (Eval mode):
/// `primary` is (1-lambda) times the cross-entropy term, `fairness` is
/// lambda times the absolute correlation penalty.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLoss {
    pub primary: f64,
    pub fairness: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_state: ModelState,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub trace: Vec<EpochLoss>,
}

/// Mini-batch SGD: each epoch permutes the rows (sampling without
/// replacement), iterates full batches plus a final partial batch, and
/// records the full-train-set loss; the snapshot with the lowest
/// recorded epoch loss is returned.
pub fn train(dataset: &Dataset, spec: &ModelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    spec.validate()?;
    let n = dataset.n_rows();
    let p = dataset.n_features();
    let mut state = init_params(spec, p, derive_seed(cfg.seed, &[0]));
    let mut rng = stream(derive_seed(cfg.seed, &[1]));
    let batch = cfg.batch_size.max(1).min(n);

    let mut order: Vec<usize> = (0..n).collect();
    let mut trace: Vec<EpochLoss> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelState)> = None;

    // Epoch-0 snapshot handling: the initial state competes only through
    // epoch losses recorded after updates, per the training protocol.
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = dataset.features.select(Axis(0), chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| dataset.labels[i]).collect();
            let zb: Vec<u8> = chunk.iter().map(|&i| dataset.protected[i]).collect();
            let wb: Vec<f64> = chunk.iter().map(|&i| dataset.weights[i]).collect();
            let (probs, cache) = forward(&state, spec, &xb, ForwardMode::Train(&mut rng))?;
            let (loss, grad_p) =
                batch_objective(probs.as_slice().unwrap(), &yb, &zb, &wb, &cfg.mitigation)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
            let grad = backward(&state, spec, &cache, &grad_p);
            sgd_step(&mut state, &grad, cfg.step_size);
        }
        let (primary, fairness) =
            crate::fairness::loss_components(&state, spec, dataset, &cfg.mitigation)?;
        let total = primary + fairness;
        if !total.is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        trace.push(EpochLoss {
            primary,
            fairness,
            total,
        });
        let criterion = if cfg.select_by_total { total } else { primary };
        if best.as_ref().is_none_or(|(_, b, _)| criterion < *b) {
            best = Some((epoch, criterion, state.clone()));
        }
    }

    match best {
        Some((best_epoch, best_loss, best_state)) => Ok(TrainOutcome {
            best_state,
            best_epoch,
            best_loss,
            trace,
        }),
        // zero epochs: return the untouched initial state
        None => Ok(TrainOutcome {
            best_state: state,
            best_epoch: 0,
            best_loss: f64::NAN,
            trace,
        }),
    }
}

/// Versioned on-disk form of a trained model.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub spec: ModelSpec,
    pub input_dim: usize,
    /// Resolved run configuration echoed by artifact writers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerDocument {
    pub rows: usize,
    pub cols: usize,
    /// Row-major weight entries.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn to_document(state: &ModelState, spec: &ModelSpec) -> ModelDocument {
    ModelDocument {
        version: 1,
        spec: spec.clone(),
        input_dim: state.weights[0].ncols(),
        provenance: None,
        layers: state
            .weights
            .iter()
            .zip(&state.biases)
            .map(|(w, b)| LayerDocument {
                rows: w.nrows(),
                cols: w.ncols(),
                weights: w.iter().copied().collect(),
                bias: b.to_vec(),
            })
            .collect(),
    }
}

pub fn from_document(doc: &ModelDocument) -> Result<(ModelState, ModelSpec)> {
    if doc.version != 1 {
        return Err(Error::Config(format!("unsupported model version {}", doc.version)));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in &doc.layers {
        let w = Array2::from_shape_vec((layer.rows, layer.cols), layer.weights.clone())
            .map_err(|e| Error::Config(format!("bad layer shape: {e}")))?;
        if layer.bias.len() != layer.rows {
            return Err(Error::Config("bias length does not match layer rows".into()));
        }
        weights.push(w);
        biases.push(Array1::from_vec(layer.bias.clone()));
    }
    let state = ModelState { weights, biases };
    if !state.is_finite() {
        return Err(Error::NonFinite("model document"));
    }
    Ok((state, doc.spec.clone()))
}

pub fn save_model(state: &ModelState, spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = to_document(state, spec);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::to_writer(std::io::BufWriter::new(file), &doc)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelState, ModelSpec)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let doc: ModelDocument = serde_json::from_reader(std::io::BufReader::new(file))?;
    from_document(&doc)
}
