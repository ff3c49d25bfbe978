//! Small convolutional policy network.
//!
//! Two 2x2 convolutions (stride 1, no padding) followed by three fully
//! connected layers, ReLU between layers and a softmax over the five actions.
//! All arithmetic is `f64`.
//!
//! Parameters live in one flat vector, layer by layer: each layer's weights
//! followed by its biases. Convolution kernels are ordered
//! (filter, channel, row, col); dense weights are row-major `[out][in]`.

mod adam;
mod format;
mod infer;

pub use adam::AdamState;
pub use format::{load_model, save_model, ModelFormatError};
pub use infer::{InferenceNet, Scratch};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::factory::{Action, EncodedState};

const K: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("input shape {got:?} does not match the network's {expected:?}")]
    ShapeMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("label {0} is not an action index")]
    BadLabel(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetworkArch {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub conv_filters: [usize; 2],
    pub fc: [usize; 3],
}

impl NetworkArch {
    /// Default policy network for `n_agents` robots on a `height x width` grid.
    pub fn for_grid(n_agents: usize, height: usize, width: usize) -> Self {
        NetworkArch {
            input_channels: n_agents + 2,
            input_height: height,
            input_width: width,
            conv_filters: [16, 16],
            fc: [64, 16, Action::COUNT],
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_height < 3 || self.input_width < 3 {
            return Err(NetError::InvalidArch(format!(
                "input must be at least 3x3, got {}x{}",
                self.input_height, self.input_width
            )));
        }
        if self.fc[2] != Action::COUNT {
            return Err(NetError::InvalidArch(format!("output layer must have {} units", Action::COUNT)));
        }
        if self.input_channels == 0 || self.conv_filters.contains(&0) || self.fc.contains(&0) {
            return Err(NetError::InvalidArch("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.input_channels, self.input_height, self.input_width)
    }

    fn conv1_out(&self) -> (usize, usize) {
        (self.input_height - 1, self.input_width - 1)
    }

    fn conv2_out(&self) -> (usize, usize) {
        (self.input_height - 2, self.input_width - 2)
    }

    fn flat_len(&self) -> usize {
        let (h, w) = self.conv2_out();
        self.conv_filters[1] * h * w
    }

    /// (fan_in, fan_out, weight count, bias count) per layer.
    fn layers(&self) -> [(usize, usize, usize, usize); 5] {
        let [f1, f2] = self.conv_filters;
        let [d1, d2, d3] = self.fc;
        let c = self.input_channels;
        let flat = self.flat_len();
        [
            (c * K * K, f1 * K * K, f1 * c * K * K, f1),
            (f1 * K * K, f2 * K * K, f2 * f1 * K * K, f2),
            (flat, d1, d1 * flat, d1),
            (d1, d2, d2 * d1, d2),
            (d2, d3, d3 * d2, d3),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.2 + l.3).sum()
    }

    /// Start offsets of (weights, biases) for each layer.
    fn offsets(&self) -> [(usize, usize); 5] {
        let mut out = [(0, 0); 5];
        let mut at = 0;
        for (i, l) in self.layers().iter().enumerate() {
            out[i] = (at, at + l.2);
            at += l.2 + l.3;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub generation: u32,
    pub agent: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    pub arch: NetworkArch,
    pub weights: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_weights(arch: NetworkArch, seed: u64) -> PolicyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out, nw, nb) in arch.layers() {
        let bound = init_bound(fan_in, fan_out);
        weights.extend((0..nw).map(|_| rng.gen_range(-bound..=bound)));
        weights.extend(std::iter::repeat_n(0.0, nb));
    }
    PolicyModel { arch, weights, meta: TrainingMeta { seed, ..Default::default() } }
}

pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl PolicyModel {
    pub fn zeros(arch: NetworkArch) -> Self {
        PolicyModel { arch, weights: vec![0.0; arch.param_count()], meta: TrainingMeta::default() }
    }

    /// Per-layer weight and bias slices, for inspection.
    pub fn layer_params(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.arch.offsets()[layer];
        let (_, _, _, nb) = self.arch.layers()[layer];
        (&self.weights[w..b], &self.weights[b..b + nb])
    }

    pub fn layer_fans(&self, layer: usize) -> (usize, usize) {
        let l = self.arch.layers()[layer];
        (l.0, l.1)
    }

    fn check_input(&self, input: &EncodedState) -> Result<(), NetError> {
        if input.shape() != self.arch.input_shape() {
            return Err(NetError::ShapeMismatch { expected: self.arch.input_shape(), got: input.shape() });
        }
        Ok(())
    }
}

/// Intermediate activations of one forward pass.
struct Activations {
    conv1: Vec<f64>,
    conv2: Vec<f64>,
    fc1: Vec<f64>,
    fc2: Vec<f64>,
    probs: Vec<f64>,
}

/// `out[f] (oh x ow) = b[f] + sum_c sum_k w[f,c,k] * shifted input plane`.
fn conv_forward(
    input: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let (oh, ow) = (h - 1, w - 1);
    let filters = bias.len();
    for f in 0..filters {
        let plane = &mut out[f * oh * ow..(f + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[f]);
        for c in 0..channels {
            let src = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let wt = weights[((f * channels + c) * K + ky) * K + kx];
                    if wt == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let row = &src[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
    }
}

fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (o, v) in out.iter_mut().enumerate() {
        *v = bias[o] + dot(&weights[o * n_in..(o + 1) * n_in], input);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[label] - lse
}

fn run(model: &PolicyModel, x: &[f64], logits_out: Option<&mut Vec<f64>>) -> Activations {
    let a = &model.arch;
    let off = a.offsets();
    let lay = a.layers();
    let p = &model.weights;
    let (h1, w1) = a.conv1_out();
    let (h2, w2) = a.conv2_out();

    let mut conv1 = vec![0.0; a.conv_filters[0] * h1 * w1];
    conv_forward(
        x,
        a.input_channels,
        a.input_height,
        a.input_width,
        &p[off[0].0..off[0].1],
        &p[off[0].1..off[0].1 + lay[0].3],
        &mut conv1,
    );
    relu(&mut conv1);
    let mut conv2 = vec![0.0; a.conv_filters[1] * h2 * w2];
    conv_forward(&conv1, a.conv_filters[0], h1, w1, &p[off[1].0..off[1].1], &p[off[1].1..off[1].1 + lay[1].3], &mut conv2);
    relu(&mut conv2);
    let mut fc1 = vec![0.0; a.fc[0]];
    dense_forward(&conv2, &p[off[2].0..off[2].1], &p[off[2].1..off[2].1 + lay[2].3], &mut fc1);
    relu(&mut fc1);
    let mut fc2 = vec![0.0; a.fc[1]];
    dense_forward(&fc1, &p[off[3].0..off[3].1], &p[off[3].1..off[3].1 + lay[3].3], &mut fc2);
    relu(&mut fc2);
    let mut logits = vec![0.0; a.fc[2]];
    dense_forward(&fc2, &p[off[4].0..off[4].1], &p[off[4].1..off[4].1 + lay[4].3], &mut logits);
    let probs = softmax(&logits);
    if let Some(out) = logits_out {
        *out = logits;
    }
    Activations { conv1, conv2, fc1, fc2, probs }
}

/// Action probabilities for one encoded state.
pub fn forward(model: &PolicyModel, input: &EncodedState) -> Result<Vec<f64>, NetError> {
    model.check_input(input)?;
    Ok(run(model, &input.values, None).probs)
}

/// Raw pre-softmax outputs.
pub fn logits(model: &PolicyModel, input: &EncodedState) -> Result<Vec<f64>, NetError> {
    model.check_input(input)?;
    let mut out = Vec::new();
    run(model, &input.values, Some(&mut out));
    Ok(out)
}

/// Cross-entropy of one labelled sample: `-log p(label)`.
pub fn sample_loss(model: &PolicyModel, input: &EncodedState, label: usize) -> Result<f64, NetError> {
    if label >= model.arch.fc[2] {
        return Err(NetError::BadLabel(label));
    }
    let z = logits(model, input)?;
    Ok(-log_softmax_at(&z, label))
}

/// Accumulates `d loss / d params` of one sample into `grad`; returns the loss.
fn backprop(model: &PolicyModel, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let a = &model.arch;
    let off = a.offsets();
    let p = &model.weights;
    let mut logits = Vec::new();
    let act = run(model, x, Some(&mut logits));
    let loss = -log_softmax_at(&logits, label);

    let mut delta: Vec<f64> = act.probs.clone();
    delta[label] -= 1.0;

    // Dense layers, last to first: (layer index, layer input activations).
    let dense = [(4usize, &act.fc2), (3, &act.fc1), (2, &act.conv2)];
    for &(layer, input) in &dense {
        let (wo, bo) = off[layer];
        let n_in = input.len();
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[bo + o] += d;
            let row = &mut grad[wo + o * n_in..wo + (o + 1) * n_in];
            for (g, &xi) in row.iter_mut().zip(input.iter()) {
                *g += d * xi;
            }
        }
        let mut back = vec![0.0; n_in];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &p[wo + o * n_in..wo + (o + 1) * n_in];
            for (b, &w) in back.iter_mut().zip(row) {
                *b += d * w;
            }
        }
        // ReLU gate of the layer input.
        for (b, &xi) in back.iter_mut().zip(input.iter()) {
            if xi <= 0.0 {
                *b = 0.0;
            }
        }
        delta = back;
    }

    // delta is now d loss / d conv2 pre-activation (gated).
    let (h1, w1) = a.conv1_out();
    let mut d_conv1 = vec![0.0; act.conv1.len()];
    conv_backward(&act.conv1, a.conv_filters[0], h1, w1, &p[off[1].0..off[1].1], &delta, grad, off[1], Some(&mut d_conv1));
    for (d, &v) in d_conv1.iter_mut().zip(&act.conv1) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    conv_backward(x, a.input_channels, a.input_height, a.input_width, &p[off[0].0..off[0].1], &d_conv1, grad, off[0], None);
    loss
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    d_out: &[f64],
    grad: &mut [f64],
    (wo, bo): (usize, usize),
    mut d_input: Option<&mut Vec<f64>>,
) {
    let (oh, ow) = (h - 1, w - 1);
    let filters = d_out.len() / (oh * ow);
    for f in 0..filters {
        let dplane = &d_out[f * oh * ow..(f + 1) * oh * ow];
        grad[bo + f] += dplane.iter().sum::<f64>();
        for c in 0..channels {
            let src = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((f * channels + c) * K + ky) * K + kx;
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let row = &src[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                        acc += dot(&dplane[oy * ow..(oy + 1) * ow], row);
                    }
                    grad[wo + widx] += acc;
                    if let Some(di) = d_input.as_deref_mut() {
                        let wt = weights[widx];
                        for oy in 0..oh {
                            let base = c * h * w + (oy + ky) * w + kx;
                            for ox in 0..ow {
                                di[base + ox] += wt * dplane[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Mean loss and mean gradient over a batch.
pub fn batch_gradient(model: &PolicyModel, batch: &[(&EncodedState, usize)]) -> Result<(f64, Vec<f64>), NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    model.arch.validate()?;
    let mut grad = vec![0.0; model.weights.len()];
    let mut loss = 0.0;
    for &(x, label) in batch {
        model.check_input(x)?;
        if label >= model.arch.fc[2] {
            return Err(NetError::BadLabel(label));
        }
        loss += backprop(model, &x.values, label, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// One Adam step on the mean cross-entropy of `batch`. Returns the loss
/// measured before the update.
pub fn training_step(
    model: &mut PolicyModel,
    opt: &mut AdamState,
    batch: &[(&EncodedState, usize)],
) -> Result<f64, NetError> {
    let (loss, grad) = batch_gradient(model, batch)?;
    opt.update(&mut model.weights, &grad);
    Ok(loss)
}

/// Largest relative disagreement between backprop and central differences,
/// `|a - n| / max(1e-12, |a| + |n|)` over all parameters.
pub fn gradient_check(model: &PolicyModel, input: &EncodedState, label: usize, epsilon: f64) -> Result<f64, NetError> {
    let (_, analytic) = batch_gradient(model, &[(input, label)])?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.weights.len() {
        let orig = probe.weights[i];
        probe.weights[i] = orig + epsilon;
        let up = sample_loss(&probe, input, label)?;
        probe.weights[i] = orig - epsilon;
        let down = sample_loss(&probe, input, label)?;
        probe.weights[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
