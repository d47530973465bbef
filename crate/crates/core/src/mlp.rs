//! Feed-forward corner scorer.
//!
//! The network maps a standardized 16-value feature vector through tanh
//! hidden layers to a single linear output estimating how far the corner's
//! apex sits from a plausible depth. Training minimizes mean squared error
//! with full-batch Polak-Ribiere conjugate gradient and stops early on a
//! held-out split of whole prisms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_ORDER_TAG};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const HIDDEN_ACTIVATION: &str = "tanh";
pub const OUTPUT_ACTIVATION: &str = "identity";
/// Smallest standard deviation stored for input standardization.
pub const DEVIATION_FLOOR: f64 = 1e-8;

/// Rows per parallel work item when evaluating the batch loss. Partial sums
/// are reduced in chunk order, so results do not depend on thread count.
const CHUNK_ROWS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("input feature {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training set is empty")]
    EmptyData,
    #[error("invalid training row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("cannot split {groups} group(s) into non-empty training and validation sets")]
    EmptySplit { groups: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model file is malformed: {0}")]
    Syntax(String),
    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model feature order {found:?} does not match extractor order {expected:?}")]
    FeatureOrder { found: String, expected: String },
    #[error("model activations {hidden:?}/{output:?} are not supported")]
    Activation { hidden: String, output: String },
    #[error("model shape is inconsistent: {0}")]
    Shape(String),
    #[error("model contains non-finite or invalid parameters: {0}")]
    InvalidParameter(String),
}

/// One-hidden-layer tanh regressor with stored input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    hidden: usize,
    /// Row-major `hidden x 16`.
    w_hidden: Vec<f64>,
    b_hidden: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
    means: [f64; FEATURE_COUNT],
    deviations: [f64; FEATURE_COUNT],
    feature_order: String,
}

impl Network {
    /// Network with `hidden` units, all parameters zero and identity
    /// standardization.
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            w_hidden: vec![0.0; hidden * FEATURE_COUNT],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
            means: [0.0; FEATURE_COUNT],
            deviations: [1.0; FEATURE_COUNT],
            feature_order: FEATURE_ORDER_TAG.to_string(),
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn random(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(hidden);
        let limit = (6.0 / (FEATURE_COUNT + hidden) as f64).sqrt();
        for x in net.w_hidden.iter_mut() {
            *x = rng.gen_range(-limit..limit);
        }
        let limit = (6.0 / (hidden + 1) as f64).sqrt();
        for x in net.w_out.iter_mut() {
            *x = rng.gen_range(-limit..limit);
        }
        net
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [FEATURE_COUNT, self.hidden, 1]
    }

    pub fn feature_order(&self) -> &str {
        &self.feature_order
    }

    pub fn standardization(&self) -> (&[f64; FEATURE_COUNT], &[f64; FEATURE_COUNT]) {
        (&self.means, &self.deviations)
    }

    /// Sets the per-feature standardization. Deviations are floored.
    pub fn set_standardization(&mut self, means: [f64; FEATURE_COUNT], deviations: [f64; FEATURE_COUNT]) {
        self.means = means;
        self.deviations = deviations.map(|d| d.max(DEVIATION_FLOOR));
    }

    pub fn param_count(&self) -> usize {
        self.hidden * (FEATURE_COUNT + 2) + 1
    }

    /// Flattened parameters: hidden weights, hidden biases, output weights,
    /// output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w_hidden);
        out.extend_from_slice(&self.b_hidden);
        out.extend_from_slice(&self.w_out);
        out.push(self.b_out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let h = self.hidden;
        let (w1, rest) = params.split_at(h * FEATURE_COUNT);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        self.w_hidden.copy_from_slice(w1);
        self.b_hidden.copy_from_slice(b1);
        self.w_out.copy_from_slice(w2);
        self.b_out = b2[0];
    }

    /// Scores a feature vector.
    pub fn forward(&self, f: &FeatureVector) -> Result<f64, MlpError> {
        let x = f.to_array();
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteInput { index });
        }
        Ok(self.predict(&x))
    }

    /// Scores a raw feature array without validation.
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.predict_standardized(&self.standardize(x))
    }

    fn standardize(&self, x: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| (x[i] - self.means[i]) / self.deviations[i])
    }

    #[inline]
    fn hidden_activation(&self, unit: usize, x: &[f64; FEATURE_COUNT]) -> f64 {
        let row = &self.w_hidden[unit * FEATURE_COUNT..(unit + 1) * FEATURE_COUNT];
        let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
        (s + self.b_hidden[unit]).tanh()
    }

    fn predict_standardized(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let s: f64 = (0..self.hidden)
            .map(|j| self.w_out[j] * self.hidden_activation(j, x))
            .sum();
        s + self.b_out
    }

    /// Squared error of one standardized sample; its gradient is added to
    /// `grad` (laid out as [`Network::params`]). `act` is scratch space.
    fn accumulate_sample(&self, x: &[f64; FEATURE_COUNT], target: f64, grad: &mut [f64], act: &mut Vec<f64>) -> f64 {
        let h = self.hidden;
        act.clear();
        act.extend((0..h).map(|j| self.hidden_activation(j, x)));
        let out: f64 = act.iter().zip(&self.w_out).map(|(a, w)| a * w).sum::<f64>() + self.b_out;
        let residual = out - target;
        let d_out = 2.0 * residual;

        let (g_w1, rest) = grad.split_at_mut(h * FEATURE_COUNT);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(h);
        g_b2[0] += d_out;
        for j in 0..h {
            let a = act[j];
            g_w2[j] += d_out * a;
            let d_hidden = d_out * self.w_out[j] * (1.0 - a * a);
            g_b1[j] += d_hidden;
            for (g, v) in g_w1[j * FEATURE_COUNT..(j + 1) * FEATURE_COUNT].iter_mut().zip(x) {
                *g += d_hidden * v;
            }
        }
        residual * residual
    }

    /// Writes the model file text.
    pub fn to_model_text(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_sizes: self.layer_sizes().to_vec(),
            activation: ActivationRecord {
                hidden: HIDDEN_ACTIVATION.to_string(),
                output: OUTPUT_ACTIVATION.to_string(),
            },
            feature_order: self.feature_order.clone(),
            standardization: Standardization {
                means: self.means.to_vec(),
                deviations: self.deviations.to_vec(),
            },
            weights: vec![
                self.w_hidden.chunks(FEATURE_COUNT).map(<[f64]>::to_vec).collect(),
                vec![self.w_out.clone()],
            ],
            biases: vec![self.b_hidden.clone(), vec![self.b_out]],
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    /// Parses model file text, refusing any file whose layout or feature
    /// order differs from what this build produces.
    pub fn from_model_text(text: &str) -> Result<Self, MlpError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| MlpError::Syntax(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(MlpError::Version {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if file.feature_order != FEATURE_ORDER_TAG {
            return Err(MlpError::FeatureOrder {
                found: file.feature_order,
                expected: FEATURE_ORDER_TAG.to_string(),
            });
        }
        if file.activation.hidden != HIDDEN_ACTIVATION || file.activation.output != OUTPUT_ACTIVATION {
            return Err(MlpError::Activation {
                hidden: file.activation.hidden,
                output: file.activation.output,
            });
        }
        let sizes = &file.layer_sizes;
        if sizes.len() != 3 || sizes[0] != FEATURE_COUNT || sizes[2] != 1 || sizes[1] == 0 {
            return Err(MlpError::Shape(format!(
                "layer sizes {sizes:?} must be [{FEATURE_COUNT}, hidden, 1]"
            )));
        }
        let h = sizes[1];
        let w = &file.weights;
        let b = &file.biases;
        if w.len() != 2
            || b.len() != 2
            || w[0].len() != h
            || w[0].iter().any(|r| r.len() != FEATURE_COUNT)
            || w[1].len() != 1
            || w[1][0].len() != h
            || b[0].len() != h
            || b[1].len() != 1
        {
            return Err(MlpError::Shape(format!("weights and biases do not match layer sizes {sizes:?}")));
        }
        let st = &file.standardization;
        if st.means.len() != FEATURE_COUNT || st.deviations.len() != FEATURE_COUNT {
            return Err(MlpError::Shape("standardization must have 16 entries".into()));
        }
        let mut net = Self::zeros(h);
        net.w_hidden = w[0].concat();
        net.b_hidden = b[0].clone();
        net.w_out = w[1][0].clone();
        net.b_out = b[1][0];
        if !net.params().iter().chain(&st.means).all(|v| v.is_finite()) {
            return Err(MlpError::InvalidParameter("non-finite value".into()));
        }
        if !st.deviations.iter().all(|d| d.is_finite() && *d >= DEVIATION_FLOOR) {
            return Err(MlpError::InvalidParameter(format!(
                "deviations must be finite and at least {DEVIATION_FLOOR:e}"
            )));
        }
        net.means.copy_from_slice(&st.means);
        net.deviations.copy_from_slice(&st.deviations);
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivationRecord {
    hidden: String,
    output: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Standardization {
    means: Vec<f64>,
    deviations: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activation: ActivationRecord,
    feature_order: String,
    standardization: Standardization,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

pub fn save_model(net: &Network) -> String {
    net.to_model_text()
}

pub fn load_model(text: &str) -> Result<Network, MlpError> {
    Network::from_model_text(text)
}

/// Feature rows with nonnegative displacement targets. Each row belongs to a
/// group (its source prism); validation splits never separate a group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    features: Vec<[f64; FEATURE_COUNT]>,
    targets: Vec<f64>,
    groups: Vec<usize>,
}

impl TrainingSet {
    pub fn new(
        features: Vec<[f64; FEATURE_COUNT]>,
        targets: Vec<f64>,
        groups: Vec<usize>,
    ) -> Result<Self, MlpError> {
        if features.is_empty() {
            return Err(MlpError::EmptyData);
        }
        if features.len() != targets.len() || features.len() != groups.len() {
            return Err(MlpError::InvalidRow {
                row: features.len().min(targets.len()).min(groups.len()),
                reason: "features, targets and groups differ in length".into(),
            });
        }
        for (row, (f, &t)) in features.iter().zip(&targets).enumerate() {
            if !f.iter().all(|v| v.is_finite()) {
                return Err(MlpError::InvalidRow {
                    row,
                    reason: "non-finite feature".into(),
                });
            }
            if !(0.0..0.5).contains(&t) {
                return Err(MlpError::InvalidRow {
                    row,
                    reason: format!("target {t} outside [0, 0.5)"),
                });
            }
        }
        Ok(Self {
            features,
            targets,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &[[f64; FEATURE_COUNT]] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 24,
            max_epochs: 2000,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
    /// No descent step could be found along the steepest-descent direction.
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub stop_reason: StopReason,
    /// Training MSE after each epoch, starting with the initial parameters.
    pub train_history: Vec<f64>,
    pub validation_history: Vec<f64>,
}

/// Mean squared error of `net` on raw feature rows and its gradient with
/// respect to [`Network::params`].
pub fn mse_and_gradient(
    net: &Network,
    inputs: &[[f64; FEATURE_COUNT]],
    targets: &[f64],
) -> (f64, Vec<f64>) {
    let standardized: Vec<[f64; FEATURE_COUNT]> = inputs.iter().map(|x| net.standardize(x)).collect();
    Batch::new(&standardized, targets).loss_and_gradient(net)
}

/// Standardized rows evaluated with a fixed reduction order.
struct Batch<'a> {
    inputs: &'a [[f64; FEATURE_COUNT]],
    targets: &'a [f64],
}

impl<'a> Batch<'a> {
    fn new(inputs: &'a [[f64; FEATURE_COUNT]], targets: &'a [f64]) -> Self {
        Self { inputs, targets }
    }

    fn loss(&self, net: &Network) -> f64 {
        let partial: Vec<f64> = self
            .inputs
            .par_chunks(CHUNK_ROWS)
            .zip(self.targets.par_chunks(CHUNK_ROWS))
            .map(|(xs, ts)| {
                xs.iter()
                    .zip(ts)
                    .map(|(x, &t)| {
                        let r = net.predict_standardized(x) - t;
                        r * r
                    })
                    .sum::<f64>()
            })
            .collect();
        partial.iter().sum::<f64>() / self.targets.len() as f64
    }

    fn loss_and_gradient(&self, net: &Network) -> (f64, Vec<f64>) {
        let n_params = net.param_count();
        let partial: Vec<(f64, Vec<f64>)> = self
            .inputs
            .par_chunks(CHUNK_ROWS)
            .zip(self.targets.par_chunks(CHUNK_ROWS))
            .map(|(xs, ts)| {
                let mut grad = vec![0.0; n_params];
                let mut act = Vec::with_capacity(net.hidden);
                let sse: f64 = xs
                    .iter()
                    .zip(ts)
                    .map(|(x, &t)| net.accumulate_sample(x, t, &mut grad, &mut act))
                    .sum();
                (sse, grad)
            })
            .collect();
        let n = self.targets.len() as f64;
        let mut grad = vec![0.0; n_params];
        let mut sse = 0.0;
        for (s, g) in &partial {
            sse += s;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (sse / n, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Splits group ids into (training, validation) row indices.
fn split_rows(data: &TrainingSet, fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>), MlpError> {
    let mut groups: Vec<usize> = data.groups.clone();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < 2 {
        return Err(MlpError::EmptySplit { groups: groups.len() });
    }
    groups.shuffle(rng);
    let n_val = ((groups.len() as f64 * fraction).round() as usize).clamp(1, groups.len() - 1);
    let mut validation_groups = groups[..n_val].to_vec();
    validation_groups.sort_unstable();
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (row, g) in data.groups.iter().enumerate() {
        if validation_groups.binary_search(g).is_ok() {
            validation.push(row);
        } else {
            train.push(row);
        }
    }
    Ok((train, validation))
}

fn feature_statistics(rows: &[[f64; FEATURE_COUNT]]) -> ([f64; FEATURE_COUNT], [f64; FEATURE_COUNT]) {
    let n = rows.len() as f64;
    let mut means = [0.0; FEATURE_COUNT];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; FEATURE_COUNT];
    for r in rows {
        for i in 0..FEATURE_COUNT {
            let d = r[i] - means[i];
            var[i] += d * d;
        }
    }
    let deviations = var.map(|v| (v / n).sqrt().max(DEVIATION_FLOOR));
    (means, deviations)
}

struct LineSearchResult {
    step: f64,
    loss: f64,
}

/// Armijo backtracking with quadratic interpolation, followed by step
/// expansion and one interpolation refinement when the first trial succeeds.
/// Returns `None` if no sufficient decrease was found.
fn line_search(
    phi: impl Fn(f64) -> f64,
    phi0: f64,
    slope: f64,
    initial_step: f64,
) -> Option<LineSearchResult> {
    const C1: f64 = 1e-4;
    const MAX_BACKTRACK: usize = 40;
    const MAX_EXPAND: usize = 12;

    let armijo = |t: f64, v: f64| v.is_finite() && v <= phi0 + C1 * t * slope;
    let quadratic_min = |t: f64, v: f64| {
        let curvature = v - phi0 - slope * t;
        (curvature > 0.0).then(|| -slope * t * t / (2.0 * curvature))
    };

    let mut t = initial_step;
    let mut accepted = None;
    for attempt in 0..MAX_BACKTRACK {
        let v = phi(t);
        if armijo(t, v) {
            accepted = Some((t, v, attempt == 0));
            break;
        }
        let next = if v.is_finite() {
            quadratic_min(t, v).unwrap_or(0.5 * t)
        } else {
            0.1 * t
        };
        t = next.clamp(0.1 * t, 0.5 * t);
    }
    let (mut t, mut v, first_try) = accepted?;

    if first_try {
        for _ in 0..MAX_EXPAND {
            let t2 = 2.0 * t;
            let v2 = phi(t2);
            if v2.is_finite() && v2 < v {
                t = t2;
                v = v2;
            } else {
                break;
            }
        }
    }
    if let Some(tq) = quadratic_min(t, v) {
        if tq.is_finite() && tq > 0.0 && (tq - t).abs() > 1e-12 * t {
            let vq = phi(tq);
            if vq.is_finite() && vq < v && armijo(tq, vq) {
                t = tq;
                v = vq;
            }
        }
    }
    Some(LineSearchResult { step: t, loss: v })
}

/// Trains a `(16, hidden, 1)` network. Each epoch is one conjugate-gradient
/// iteration over the whole training split.
pub fn train(data: &TrainingSet, cfg: &TrainConfig) -> Result<(Network, TrainReport), MlpError> {
    if data.is_empty() {
        return Err(MlpError::EmptyData);
    }
    if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(MlpError::InvalidConfig(format!(
            "validation fraction {} must lie in (0, 1)",
            cfg.validation_fraction
        )));
    }
    if cfg.hidden == 0 {
        return Err(MlpError::InvalidConfig("hidden layer must have at least one unit".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_rows, validation_rows) = split_rows(data, cfg.validation_fraction, &mut rng)?;

    let raw_train: Vec<[f64; FEATURE_COUNT]> = train_rows.iter().map(|&r| data.features[r]).collect();
    let (means, deviations) = feature_statistics(&raw_train);
    let mut net = Network::random(cfg.hidden, &mut rng);
    net.set_standardization(means, deviations);

    let train_x: Vec<_> = raw_train.iter().map(|x| net.standardize(x)).collect();
    let train_t: Vec<f64> = train_rows.iter().map(|&r| data.targets[r]).collect();
    let val_x: Vec<_> = validation_rows.iter().map(|&r| net.standardize(&data.features[r])).collect();
    let val_t: Vec<f64> = validation_rows.iter().map(|&r| data.targets[r]).collect();
    let train_batch = Batch::new(&train_x, &train_t);
    let val_batch = Batch::new(&val_x, &val_t);

    let n_params = net.param_count();
    let mut params = net.params();
    let (mut loss, mut grad) = train_batch.loss_and_gradient(&net);
    if !loss.is_finite() {
        return Err(MlpError::NonFiniteLoss { epoch: 0 });
    }
    let mut val_loss = val_batch.loss(&net);
    let mut train_history = vec![loss];
    let mut validation_history = vec![val_loss];
    let mut best = (0usize, val_loss, loss, params.clone());
    let mut stale = 0usize;

    let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut since_restart = 0usize;
    let mut prev_step: Option<(f64, f64)> = None; // (step, slope)
    let mut probe = net.clone();
    let mut epochs_run = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            direction = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
            since_restart = 0;
        }
        if slope == 0.0 {
            stop_reason = StopReason::Converged;
            break;
        }

        let mut found = None;
        for _ in 0..2 {
            let dnorm = dot(&direction, &direction).sqrt();
            let initial = match prev_step {
                Some((t, s)) => (t * s / slope).clamp(1e-12, 1e6),
                None => (1.0 / dnorm).min(1.0),
            };
            let phi = |t: f64| {
                let mut trial = probe.clone();
                trial.set_params(&axpy(&params, t, &direction));
                train_batch.loss(&trial)
            };
            found = line_search(phi, loss, slope, initial);
            if found.is_some() || since_restart == 0 {
                break;
            }
            // Conjugate direction failed: retry along steepest descent.
            direction = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
            since_restart = 0;
        }
        let Some(LineSearchResult { step, loss: new_loss }) = found else {
            stop_reason = StopReason::Converged;
            break;
        };

        params = axpy(&params, step, &direction);
        probe.set_params(&params);
        let (l, new_grad) = train_batch.loss_and_gradient(&probe);
        if !l.is_finite() {
            return Err(MlpError::NonFiniteLoss { epoch });
        }
        debug_assert!((l - new_loss).abs() <= 1e-9 * new_loss.abs().max(1.0));
        loss = l;
        val_loss = val_batch.loss(&probe);
        if !val_loss.is_finite() {
            return Err(MlpError::NonFiniteLoss { epoch });
        }
        train_history.push(loss);
        validation_history.push(val_loss);
        epochs_run = epoch;
        prev_step = Some((step, slope));

        // Polak-Ribiere with non-negativity and periodic restarts.
        let gg = dot(&grad, &grad);
        let beta = if gg > 0.0 {
            let num: f64 = new_grad.iter().zip(&grad).map(|(n, o)| n * (n - o)).sum();
            (num / gg).max(0.0)
        } else {
            0.0
        };
        since_restart += 1;
        let beta = if since_restart >= n_params {
            since_restart = 0;
            0.0
        } else {
            beta
        };
        direction = new_grad
            .iter()
            .zip(&direction)
            .map(|(g, d)| -g + beta * d)
            .collect();
        grad = new_grad;

        if val_loss < best.1 {
            best = (epoch, val_loss, loss, params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    let (best_epoch, validation_mse, train_mse, best_params) = best;
    net.set_params(&best_params);
    let report = TrainReport {
        config: cfg.clone(),
        train_rows: train_rows.len(),
        validation_rows: validation_rows.len(),
        epochs_run,
        best_epoch,
        train_mse,
        validation_mse,
        stop_reason,
        train_history,
        validation_history,
    };
    Ok((net, report))
}

/// Pearson correlation coefficient; `None` when either input is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
