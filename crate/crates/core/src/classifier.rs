//! Two-layer feed-forward network mapping a 30-value shape descriptor to
//! nine category probabilities: sigmoid hidden layer, softmax output,
//! cross-entropy loss, mini-batch SGD.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shape::SHAPE_DIM;

pub const NUM_CATEGORIES: usize = 9;
pub const DEFAULT_HIDDEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Boats,
    Animals,
    Cartoon,
    Automobiles,
    Human,
    Trees,
    Buildings,
    Computers,
    Trains,
}

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::Boats,
        Category::Animals,
        Category::Cartoon,
        Category::Automobiles,
        Category::Human,
        Category::Trees,
        Category::Buildings,
        Category::Computers,
        Category::Trains,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Boats => "boats",
            Category::Animals => "animals",
            Category::Cartoon => "cartoon",
            Category::Automobiles => "automobiles",
            Category::Human => "human",
            Category::Trees => "trees",
            Category::Buildings => "buildings",
            Category::Computers => "computers",
            Category::Trains => "trains",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<Self> {
        let name = name.trim();
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Features = [f64; SHAPE_DIM];
pub type Probabilities = [f64; NUM_CATEGORIES];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("training set has no samples for category {0}")]
    MissingCategory(Category),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("weight file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt weight file: {0}")]
    Corrupt(String),
}

/// Parameters of the network. `w1` is `SHAPE_DIM × hidden` and `w2` is
/// `hidden × NUM_CATEGORIES`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub hidden: usize,
    pub seed: u64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Xavier-uniform initialization from a seeded ChaCha stream; zero biases.
pub fn init_network(seed: u64, hidden: usize) -> NetworkWeights {
    assert!(hidden >= 1, "hidden width must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |fan_in: usize, fan_out: usize| -> Vec<f64> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect()
    };
    let w1 = layer(SHAPE_DIM, hidden);
    let w2 = layer(hidden, NUM_CATEGORIES);
    NetworkWeights {
        hidden,
        seed,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; NUM_CATEGORIES],
    }
}

impl NetworkWeights {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            seed: 0,
            w1: vec![0.0; SHAPE_DIM * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * NUM_CATEGORIES],
            b2: vec![0.0; NUM_CATEGORIES],
        }
    }

    fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1.iter_mut().chain(&mut self.b1).chain(&mut self.w2).chain(&mut self.b2)
    }
}

struct Activations {
    hidden: Vec<f64>,
    logits: Probabilities,
    probs: Probabilities,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax(logits: &Probabilities) -> Probabilities {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CATEGORIES];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

fn activations(w: &NetworkWeights, x: &Features) -> Activations {
    let h = w.hidden;
    let mut hidden = w.b1.clone();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w.w1[i * h..(i + 1) * h];
        for (acc, &wij) in hidden.iter_mut().zip(row) {
            *acc += xi * wij;
        }
    }
    for v in &mut hidden {
        *v = sigmoid(*v);
    }
    let mut logits = [0.0; NUM_CATEGORIES];
    logits.copy_from_slice(&w.b2);
    for (j, &hj) in hidden.iter().enumerate() {
        let row = &w.w2[j * NUM_CATEGORIES..(j + 1) * NUM_CATEGORIES];
        for (acc, &wjk) in logits.iter_mut().zip(row) {
            *acc += hj * wjk;
        }
    }
    let probs = softmax(&logits);
    Activations { hidden, logits, probs }
}

pub fn forward(w: &NetworkWeights, x: &Features) -> Probabilities {
    activations(w, x).probs
}

/// Cross-entropy of the target class, computed from logits via log-sum-exp.
pub fn loss(w: &NetworkWeights, x: &Features, target: Category) -> f64 {
    let logits = activations(w, x).logits;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target.code() as usize]
}

/// Argmax of the distribution, smallest category code on ties.
pub fn predict_category(w: &NetworkWeights, x: &Features) -> (Category, Probabilities) {
    let probs = forward(w, x);
    (argmax_category(&probs), probs)
}

pub fn argmax_category(probs: &Probabilities) -> Category {
    let mut best = 0;
    for k in 1..NUM_CATEGORIES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    Category::ALL[best]
}

/// Loss gradients, laid out like [`NetworkWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(w: &NetworkWeights) -> Self {
        Self {
            w1: vec![0.0; w.w1.len()],
            b1: vec![0.0; w.b1.len()],
            w2: vec![0.0; w.w2.len()],
            b2: vec![0.0; w.b2.len()],
        }
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }
}

/// Accumulates the cross-entropy gradient of one sample into `grad`;
/// returns the sample's loss.
fn accumulate_gradient(w: &NetworkWeights, x: &Features, target: Category, grad: &mut Gradients) -> f64 {
    let act = activations(w, x);
    let h = w.hidden;
    let t = target.code() as usize;
    let mut d_logits = act.probs;
    d_logits[t] -= 1.0;

    let mut d_hidden = vec![0.0; h];
    for j in 0..h {
        let row = j * NUM_CATEGORIES;
        let mut acc = 0.0;
        for k in 0..NUM_CATEGORIES {
            grad.w2[row + k] += act.hidden[j] * d_logits[k];
            acc += w.w2[row + k] * d_logits[k];
        }
        d_hidden[j] = acc * act.hidden[j] * (1.0 - act.hidden[j]);
    }
    for k in 0..NUM_CATEGORIES {
        grad.b2[k] += d_logits[k];
    }
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..h {
            grad.w1[i * h + j] += xi * d_hidden[j];
        }
    }
    for j in 0..h {
        grad.b1[j] += d_hidden[j];
    }
    -act.probs[t].max(f64::MIN_POSITIVE).ln()
}

/// Analytic gradient of the single-sample loss.
pub fn backprop(w: &NetworkWeights, x: &Features, target: Category) -> Gradients {
    let mut g = Gradients::zeros_like(w);
    accumulate_gradient(w, x, target, &mut g);
    g
}

/// Compares `analytic` against central finite differences (step 1e-5) over
/// every parameter. Relative error per entry is `|a - n| / max(|a| + |n|, 1e-4)`;
/// the floor keeps near-zero gradients from reporting round-off as error.
pub fn gradient_check_with(
    w: &NetworkWeights,
    x: &Features,
    target: Category,
    analytic: impl Fn(&NetworkWeights, &Features, Category) -> Gradients,
) -> f64 {
    const STEP: f64 = 1e-5;
    let grads = analytic(w, x, target);
    let mut probe = w.clone();
    let mut worst: f64 = 0.0;
    for (idx, &a) in grads.iter().enumerate().take(w.parameter_count()) {
        let original = *probe.params_mut().nth(idx).expect("index in range");
        *probe.params_mut().nth(idx).unwrap() = original + STEP;
        let up = loss(&probe, x, target);
        *probe.params_mut().nth(idx).unwrap() = original - STEP;
        let down = loss(&probe, x, target);
        *probe.params_mut().nth(idx).unwrap() = original;
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

pub fn gradient_check(w: &NetworkWeights, x: &Features, target: Category) -> f64 {
    gradient_check_with(w, x, target, backprop)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub target_loss: f64,
    /// Categories that must each have at least one sample. `None` requires
    /// all nine.
    pub categories: Option<Vec<Category>>,
    /// Run SGD on per-feature standardized inputs and fold the affine map
    /// back into `w1`/`b1` afterwards. The returned network still takes raw
    /// descriptors.
    pub standardize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 16,
            max_epochs: 500,
            target_loss: 0.01,
            categories: None,
            standardize_inputs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    /// Mean per-sample loss of each epoch, accumulated while the epoch ran.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD on the mean cross-entropy. Sample order is reshuffled each
/// epoch from a stream seeded by `w.seed`, so training is reproducible.
pub fn train(
    w: &NetworkWeights,
    samples: &[(Features, Category)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ClassifierError> {
    if samples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let required = cfg.categories.clone().unwrap_or_else(|| Category::ALL.to_vec());
    for c in required {
        if !samples.iter().any(|(_, label)| *label == c) {
            return Err(ClassifierError::MissingCategory(c));
        }
    }

    let scaler = if cfg.standardize_inputs { InputScaler::fit(samples) } else { InputScaler::identity() };
    let scaled: Vec<(Features, Category)> = samples.iter().map(|(x, t)| (scaler.apply(x), *t)).collect();
    let samples = scaled.as_slice();
    let mut weights = scaler.to_scaled(w);
    let mut rng = ChaCha8Rng::seed_from_u64(weights.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch_size = cfg.batch_size.max(1);
    let mut epoch_losses = Vec::new();
    let mut grad = Gradients::zeros_like(&weights);

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            for g in [&mut grad.w1, &mut grad.b1, &mut grad.w2, &mut grad.b2] {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                let (x, t) = &samples[i];
                epoch_loss += accumulate_gradient(&weights, x, *t, &mut grad);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (p, g) in weights.params_mut().zip(grad.iter()) {
                *p -= step * g;
            }
        }
        let mean = epoch_loss / samples.len() as f64;
        epoch_losses.push(mean);
        if mean < cfg.target_loss {
            break;
        }
    }
    Ok(TrainOutcome { weights: scaler.to_raw(&weights), epoch_losses })
}

/// Per-feature affine map `x' = (x - mean) / scale`.
struct InputScaler {
    mean: Features,
    scale: Features,
}

impl InputScaler {
    fn identity() -> Self {
        Self { mean: [0.0; SHAPE_DIM], scale: [1.0; SHAPE_DIM] }
    }

    /// Mean and population standard deviation; constant features are left as is.
    fn fit(samples: &[(Features, Category)]) -> Self {
        let n = samples.len() as f64;
        let mut out = Self::identity();
        for i in 0..SHAPE_DIM {
            let mean = samples.iter().map(|(x, _)| x[i]).sum::<f64>() / n;
            let var = samples.iter().map(|(x, _)| (x[i] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 {
                out.mean[i] = mean;
                out.scale[i] = sd;
            }
        }
        out
    }

    fn apply(&self, x: &Features) -> Features {
        let mut y = *x;
        for i in 0..SHAPE_DIM {
            y[i] = (x[i] - self.mean[i]) / self.scale[i];
        }
        y
    }

    /// The same network expressed on scaled inputs.
    fn to_scaled(&self, w: &NetworkWeights) -> NetworkWeights {
        let h = w.hidden;
        let mut out = w.clone();
        for i in 0..SHAPE_DIM {
            for j in 0..h {
                let wij = w.w1[i * h + j];
                out.w1[i * h + j] = wij * self.scale[i];
                out.b1[j] += self.mean[i] * wij;
            }
        }
        out
    }

    fn to_raw(&self, v: &NetworkWeights) -> NetworkWeights {
        let h = v.hidden;
        let mut out = v.clone();
        for i in 0..SHAPE_DIM {
            for j in 0..h {
                let wij = v.w1[i * h + j] / self.scale[i];
                out.w1[i * h + j] = wij;
                out.b1[j] -= self.mean[i] * wij;
            }
        }
        out
    }
}

pub fn accuracy(w: &NetworkWeights, samples: &[(Features, Category)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples.iter().filter(|(x, t)| predict_category(w, x).0 == *t).count();
    correct as f64 / samples.len() as f64
}

const WEIGHTS_MAGIC: &[u8; 4] = b"CBNW";
pub const WEIGHTS_VERSION: u8 = 1;

/// Little-endian layout: magic `CBNW`, version byte, hidden width (u32),
/// seed (u64), then `w1`, `b1`, `w2`, `b2` as f64.
pub fn serialize_weights(w: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + 8 * w.parameter_count());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.extend_from_slice(&(w.hidden as u32).to_le_bytes());
    out.extend_from_slice(&w.seed.to_le_bytes());
    for v in w.w1.iter().chain(&w.b1).chain(&w.w2).chain(&w.b2) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_weights(bytes: &[u8]) -> Result<NetworkWeights, ClassifierError> {
    let corrupt = |msg: &str| ClassifierError::Corrupt(msg.to_string());
    if bytes.len() < 17 {
        return Err(corrupt("payload shorter than header"));
    }
    if &bytes[..4] != WEIGHTS_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if bytes[4] != WEIGHTS_VERSION {
        return Err(ClassifierError::VersionMismatch { found: bytes[4], expected: WEIGHTS_VERSION });
    }
    let hidden = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    if hidden == 0 {
        return Err(corrupt("hidden width is zero"));
    }
    let mut w = NetworkWeights::zeros(hidden);
    w.seed = seed;
    let body = &bytes[17..];
    if body.len() != 8 * w.parameter_count() {
        return Err(corrupt("payload length does not match hidden width"));
    }
    for (p, chunk) in w.params_mut().zip(body.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
        if !p.is_finite() {
            return Err(corrupt("non-finite parameter"));
        }
    }
    Ok(w)
}
