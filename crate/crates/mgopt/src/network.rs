//! Fixed-width residual network: forward propagation with time-step scaling,
//! cross-entropy loss, exact backpropagation, and evaluation.
//!
//! A network is `input map -> N residual blocks -> output map`. The input and
//! output maps are plain affine layers; each block updates the hidden state by
//! `y_n = y_{n-1} + dt * relu(W_n y_{n-1} + b_n)`.
//!
//! Parameters live in one flat `Vec<f64>` with layout
//! `[input W | input b | block_0 W | block_0 b | ... | output W | output b]`,
//! so transfer operators and optimizers can act on contiguous block slices.
//! All batch reductions run over fixed-size sample chunks combined in chunk
//! order, which makes results bitwise identical for any thread count.

use crate::numerics::{
    self, all_finite, dot, log_softmax_at, matvec_into, matvec_transpose_add, outer_add,
    xavier_init, Matrix, SeededRng,
};
use rayon::prelude::*;

/// Samples per reduction chunk. Fixed so that floating-point summation order
/// never depends on the thread count.
const REDUCE_CHUNK: usize = 64;

/// Architecture of one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetSpec {
    /// Input dimension.
    pub input_dim: usize,
    /// Hidden width, constant across blocks.
    pub width: usize,
    /// Number of output classes.
    pub num_classes: usize,
    /// Number of residual blocks.
    pub depth: usize,
    /// Time-step scale multiplying each block's output.
    pub dt: f64,
}

impl NetSpec {
    pub fn new(input_dim: usize, width: usize, num_classes: usize, depth: usize, dt: f64) -> Self {
        assert!(width >= 1, "width must be >= 1");
        assert!(depth >= 1, "depth must be >= 1");
        assert!(dt > 0.0, "dt must be positive");
        assert!(input_dim >= 1 && num_classes >= 1);
        NetSpec {
            input_dim,
            width,
            num_classes,
            depth,
            dt,
        }
    }

    /// Length of the input-map slice (`W` then `b`).
    pub fn head_len(&self) -> usize {
        self.width * self.input_dim + self.width
    }

    /// Length of one block slice (`W` then `b`).
    pub fn block_stride(&self) -> usize {
        self.width * self.width + self.width
    }

    /// Length of the output-map slice (`W` then `b`).
    pub fn tail_len(&self) -> usize {
        self.num_classes * self.width + self.num_classes
    }

    /// Total number of trainable parameters.
    pub fn param_len(&self) -> usize {
        self.head_len() + self.depth * self.block_stride() + self.tail_len()
    }

    pub fn block_offset(&self, block: usize) -> usize {
        debug_assert!(block < self.depth);
        self.head_len() + block * self.block_stride()
    }

    pub fn tail_offset(&self) -> usize {
        self.head_len() + self.depth * self.block_stride()
    }
}

/// Parameters of one residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Structured view of all trainable parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub input_weight: Matrix,
    pub input_bias: Vec<f64>,
    pub blocks: Vec<BlockParams>,
    pub output_weight: Matrix,
    pub output_bias: Vec<f64>,
}

impl NetParams {
    /// Xavier-initialized weights, zero biases.
    pub fn xavier(spec: &NetSpec, rng: &mut SeededRng) -> Self {
        let input_weight = xavier_init(rng, spec.width, spec.input_dim);
        let blocks = (0..spec.depth)
            .map(|_| BlockParams {
                weight: xavier_init(rng, spec.width, spec.width),
                bias: vec![0.0; spec.width],
            })
            .collect();
        let output_weight = xavier_init(rng, spec.num_classes, spec.width);
        NetParams {
            input_weight,
            input_bias: vec![0.0; spec.width],
            blocks,
            output_weight,
            output_bias: vec![0.0; spec.num_classes],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.input_weight.as_slice().len()
                + self.input_bias.len()
                + self
                    .blocks
                    .iter()
                    .map(|b| b.weight.as_slice().len() + b.bias.len())
                    .sum::<usize>()
                + self.output_weight.as_slice().len()
                + self.output_bias.len(),
        );
        out.extend_from_slice(self.input_weight.as_slice());
        out.extend_from_slice(&self.input_bias);
        for b in &self.blocks {
            out.extend_from_slice(b.weight.as_slice());
            out.extend_from_slice(&b.bias);
        }
        out.extend_from_slice(self.output_weight.as_slice());
        out.extend_from_slice(&self.output_bias);
        out
    }

    /// Inverse of [`NetParams::flatten`]. Panics if the length differs from
    /// `spec.param_len()`.
    pub fn unflatten(spec: &NetSpec, theta: &[f64]) -> Self {
        assert_eq!(
            theta.len(),
            spec.param_len(),
            "parameter vector length {} does not match spec ({})",
            theta.len(),
            spec.param_len()
        );
        let w = spec.width;
        let mut pos = 0;
        let mut take = |len: usize| {
            let s = &theta[pos..pos + len];
            pos += len;
            s.to_vec()
        };
        let input_weight = Matrix::from_vec(w, spec.input_dim, take(w * spec.input_dim));
        let input_bias = take(w);
        let blocks = (0..spec.depth)
            .map(|_| BlockParams {
                weight: Matrix::from_vec(w, w, take(w * w)),
                bias: take(w),
            })
            .collect();
        let output_weight = Matrix::from_vec(spec.num_classes, w, take(spec.num_classes * w));
        let output_bias = take(spec.num_classes);
        NetParams {
            input_weight,
            input_bias,
            blocks,
            output_weight,
            output_bias,
        }
    }
}

/// Everything the backward pass needs from one forward pass over a batch:
/// per-sample hidden states `y_0..y_N`, per-block ReLU masks, and logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    num_samples: usize,
    width: usize,
    depth: usize,
    num_classes: usize,
    states: Vec<f64>,
    masks: Vec<u8>,
    logits: Vec<f64>,
}

impl ForwardCache {
    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// Hidden state `y_layer` of one sample; layer 0 is the input-map output.
    pub fn state(&self, sample: usize, layer: usize) -> &[f64] {
        debug_assert!(layer <= self.depth);
        let per_sample = (self.depth + 1) * self.width;
        let base = sample * per_sample + layer * self.width;
        &self.states[base..base + self.width]
    }

    pub fn mask(&self, sample: usize, block: usize) -> &[u8] {
        let per_sample = self.depth * self.width;
        let base = sample * per_sample + block * self.width;
        &self.masks[base..base + self.width]
    }

    pub fn logits(&self, sample: usize) -> &[f64] {
        &self.logits[sample * self.num_classes..(sample + 1) * self.num_classes]
    }

    /// All logits, row-major `num_samples x num_classes`.
    pub fn all_logits(&self) -> &[f64] {
        &self.logits
    }
}

struct SampleScratch {
    pre_activation: Vec<f64>,
    delta_state: Vec<f64>,
    delta_block: Vec<f64>,
    delta_logits: Vec<f64>,
}

impl SampleScratch {
    fn new(spec: &NetSpec) -> Self {
        SampleScratch {
            pre_activation: vec![0.0; spec.width],
            delta_state: vec![0.0; spec.width],
            delta_block: vec![0.0; spec.width],
            delta_logits: vec![0.0; spec.num_classes],
        }
    }
}

/// Forward pass of one sample, writing states, masks, and logits.
fn forward_sample(
    spec: &NetSpec,
    theta: &[f64],
    input: &[f64],
    states: &mut [f64],
    masks: &mut [u8],
    logits: &mut [f64],
    scratch: &mut SampleScratch,
) {
    let w = spec.width;
    let head = spec.head_len();
    let stride = spec.block_stride();

    // y_0 = input map (affine, no nonlinearity)
    {
        let (weight, bias) = theta[..head].split_at(w * spec.input_dim);
        let y0 = &mut states[..w];
        matvec_into(weight, w, spec.input_dim, input, y0);
        for (y, b) in y0.iter_mut().zip(bias) {
            *y += b;
        }
    }

    for n in 0..spec.depth {
        let block = &theta[head + n * stride..head + (n + 1) * stride];
        let (weight, bias) = block.split_at(w * w);
        let (prev, rest) = states[n * w..].split_at_mut(w);
        let next = &mut rest[..w];

        let u = &mut scratch.pre_activation;
        matvec_into(weight, w, w, prev, u);
        let mask = &mut masks[n * w..(n + 1) * w];
        for i in 0..w {
            let ui = u[i] + bias[i];
            if ui > 0.0 {
                mask[i] = 1;
                next[i] = prev[i] + spec.dt * ui;
            } else {
                mask[i] = 0;
                next[i] = prev[i];
            }
        }
    }

    let tail = &theta[spec.tail_offset()..];
    let (weight, bias) = tail.split_at(spec.num_classes * w);
    let y_final = &states[spec.depth * w..(spec.depth + 1) * w];
    matvec_into(weight, spec.num_classes, w, y_final, logits);
    for (z, b) in logits.iter_mut().zip(bias) {
        *z += b;
    }
}

/// Backward pass of one sample. Accumulates the unscaled cross-entropy
/// gradient (no `1/batch` factor, no regularizer) into `grad`.
#[allow(clippy::too_many_arguments)]
fn backward_sample(
    spec: &NetSpec,
    theta: &[f64],
    input: &[f64],
    states: &[f64],
    masks: &[u8],
    logits: &[f64],
    label: usize,
    grad: &mut [f64],
    scratch: &mut SampleScratch,
) {
    let w = spec.width;
    let head = spec.head_len();
    let stride = spec.block_stride();

    // d loss / d logits = softmax - onehot
    let dz = &mut scratch.delta_logits;
    dz.copy_from_slice(&numerics::softmax(logits));
    dz[label] -= 1.0;

    // output map
    let tail_off = spec.tail_offset();
    let y_final = &states[spec.depth * w..(spec.depth + 1) * w];
    {
        let (gw, gb) = grad[tail_off..].split_at_mut(spec.num_classes * w);
        outer_add(gw, dz, y_final);
        for (g, d) in gb.iter_mut().zip(dz.iter()) {
            *g += d;
        }
    }
    let dy = &mut scratch.delta_state;
    dy.fill(0.0);
    matvec_transpose_add(
        &theta[tail_off..tail_off + spec.num_classes * w],
        spec.num_classes,
        w,
        dz,
        dy,
    );

    for n in (0..spec.depth).rev() {
        let mask = &masks[n * w..(n + 1) * w];
        let du = &mut scratch.delta_block;
        for i in 0..w {
            du[i] = if mask[i] == 1 { spec.dt * dy[i] } else { 0.0 };
        }
        let y_prev = &states[n * w..(n + 1) * w];
        let off = head + n * stride;
        {
            let (gw, gb) = grad[off..off + stride].split_at_mut(w * w);
            outer_add(gw, du, y_prev);
            for (g, d) in gb.iter_mut().zip(du.iter()) {
                *g += d;
            }
        }
        // dy_{n-1} = dy_n + W_n^T du
        matvec_transpose_add(&theta[off..off + w * w], w, w, du, dy);
    }

    // input map
    let (gw, gb) = grad[..head].split_at_mut(w * spec.input_dim);
    outer_add(gw, dy, input);
    for (g, d) in gb.iter_mut().zip(dy.iter()) {
        *g += d;
    }
}

fn chunk_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    (0..len)
        .step_by(REDUCE_CHUNK)
        .map(|start| start..(start + REDUCE_CHUNK).min(len))
        .collect()
}

/// Forward propagation of a batch. `inputs` is row-major
/// `num_samples x input_dim`; returns the full cache including logits.
pub fn forward(spec: &NetSpec, theta: &[f64], inputs: &[f64]) -> ForwardCache {
    assert_eq!(theta.len(), spec.param_len(), "parameter length mismatch");
    assert_eq!(
        inputs.len() % spec.input_dim,
        0,
        "input buffer is not a whole number of samples of dimension {}",
        spec.input_dim
    );
    let n = inputs.len() / spec.input_dim;
    let w = spec.width;
    let per_states = (spec.depth + 1) * w;
    let per_masks = spec.depth * w;

    let mut cache = ForwardCache {
        num_samples: n,
        width: w,
        depth: spec.depth,
        num_classes: spec.num_classes,
        states: vec![0.0; n * per_states],
        masks: vec![0u8; n * per_masks],
        logits: vec![0.0; n * spec.num_classes],
    };

    let ranges = chunk_ranges(n);
    let states_chunks: Vec<&mut [f64]> =
        cache.states.chunks_mut(per_states * REDUCE_CHUNK).collect();
    let masks_chunks: Vec<&mut [u8]> = cache.masks.chunks_mut(per_masks * REDUCE_CHUNK).collect();
    let logits_chunks: Vec<&mut [f64]> = cache
        .logits
        .chunks_mut(spec.num_classes * REDUCE_CHUNK)
        .collect();

    ranges
        .into_par_iter()
        .zip(states_chunks)
        .zip(masks_chunks)
        .zip(logits_chunks)
        .for_each(|(((range, states), masks), logits)| {
            let mut scratch = SampleScratch::new(spec);
            for (i, sample) in range.clone().enumerate() {
                forward_sample(
                    spec,
                    theta,
                    &inputs[sample * spec.input_dim..(sample + 1) * spec.input_dim],
                    &mut states[i * per_states..(i + 1) * per_states],
                    &mut masks[i * per_masks..(i + 1) * per_masks],
                    &mut logits[i * spec.num_classes..(i + 1) * spec.num_classes],
                    &mut scratch,
                );
            }
        });

    cache
}

/// Mean cross-entropy of `logits` (row-major `num_samples x num_classes`)
/// against `labels`, plus `lambda * ||theta||^2`.
pub fn loss(logits: &[f64], labels: &[usize], theta: &[f64], lambda: f64) -> f64 {
    assert!(!labels.is_empty(), "loss of an empty batch");
    assert_eq!(logits.len() % labels.len(), 0, "logit/label count mismatch");
    let num_classes = logits.len() / labels.len();
    let mut ce = 0.0;
    for (s, &label) in labels.iter().enumerate() {
        let z = &logits[s * num_classes..(s + 1) * num_classes];
        ce -= log_softmax_at(z, label);
    }
    let mut total = ce / labels.len() as f64;
    if lambda != 0.0 {
        total += lambda * dot(theta, theta);
    }
    total
}

/// Exact gradient of [`loss`] composed with [`forward`], for the batch that
/// produced `cache`. Returns the flattened gradient vector.
pub fn backward(
    spec: &NetSpec,
    theta: &[f64],
    inputs: &[f64],
    cache: &ForwardCache,
    labels: &[usize],
    lambda: f64,
) -> Vec<f64> {
    let n = cache.num_samples;
    assert_eq!(labels.len(), n, "label count does not match cache");
    let k = spec.param_len();

    let partials: Vec<Vec<f64>> = chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            let mut scratch = SampleScratch::new(spec);
            let mut grad = vec![0.0; k];
            for sample in range {
                backward_sample(
                    spec,
                    theta,
                    &inputs[sample * spec.input_dim..(sample + 1) * spec.input_dim],
                    &cache.states[sample * (spec.depth + 1) * spec.width
                        ..(sample + 1) * (spec.depth + 1) * spec.width],
                    &cache.masks
                        [sample * spec.depth * spec.width..(sample + 1) * spec.depth * spec.width],
                    cache.logits(sample),
                    labels[sample],
                    &mut grad,
                    &mut scratch,
                );
            }
            grad
        })
        .collect();

    finish_gradient(partials, theta, n, lambda)
}

fn finish_gradient(partials: Vec<Vec<f64>>, theta: &[f64], n: usize, lambda: f64) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    for p in partials {
        numerics::axpy(1.0, &p, &mut grad);
    }
    let inv = 1.0 / n as f64;
    for g in &mut grad {
        *g *= inv;
    }
    if lambda != 0.0 {
        numerics::axpy(2.0 * lambda, theta, &mut grad);
    }
    grad
}

/// Fused forward + backward over a batch without materializing the full batch
/// cache; memory use is per-thread, not per-batch. Bitwise identical to
/// `forward` + `loss` + `backward`.
pub fn loss_and_grad(
    spec: &NetSpec,
    theta: &[f64],
    inputs: &[f64],
    labels: &[usize],
    lambda: f64,
) -> (f64, Vec<f64>) {
    assert_eq!(theta.len(), spec.param_len(), "parameter length mismatch");
    let n = labels.len();
    assert_eq!(
        inputs.len(),
        n * spec.input_dim,
        "input/label count mismatch"
    );
    let k = spec.param_len();
    let w = spec.width;
    let per_states = (spec.depth + 1) * w;
    let per_masks = spec.depth * w;

    let partials: Vec<(f64, Vec<f64>)> = chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            let mut scratch = SampleScratch::new(spec);
            let mut states = vec![0.0; per_states];
            let mut masks = vec![0u8; per_masks];
            let mut logits = vec![0.0; spec.num_classes];
            let mut grad = vec![0.0; k];
            let mut ce = 0.0;
            for sample in range {
                let input = &inputs[sample * spec.input_dim..(sample + 1) * spec.input_dim];
                forward_sample(
                    spec,
                    theta,
                    input,
                    &mut states,
                    &mut masks,
                    &mut logits,
                    &mut scratch,
                );
                ce -= log_softmax_at(&logits, labels[sample]);
                backward_sample(
                    spec,
                    theta,
                    input,
                    &states,
                    &masks,
                    &logits,
                    labels[sample],
                    &mut grad,
                    &mut scratch,
                );
            }
            (ce, grad)
        })
        .collect();

    let mut ce = 0.0;
    let grads: Vec<Vec<f64>> = partials
        .into_iter()
        .map(|(c, g)| {
            ce += c;
            g
        })
        .collect();
    let grad = finish_gradient(grads, theta, n, lambda);
    let mut total = ce / n as f64;
    if lambda != 0.0 {
        total += lambda * dot(theta, theta);
    }
    (total, grad)
}

/// Batch loss without gradient (forward only).
pub fn batch_loss(
    spec: &NetSpec,
    theta: &[f64],
    inputs: &[f64],
    labels: &[usize],
    lambda: f64,
) -> f64 {
    assert_eq!(theta.len(), spec.param_len(), "parameter length mismatch");
    let n = labels.len();
    assert_eq!(
        inputs.len(),
        n * spec.input_dim,
        "input/label count mismatch"
    );

    let partials: Vec<f64> = chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            let mut rolling = RollingForward::new(spec);
            let mut ce = 0.0;
            for sample in range {
                let input = &inputs[sample * spec.input_dim..(sample + 1) * spec.input_dim];
                let logits = rolling.logits(theta, input);
                ce -= log_softmax_at(logits, labels[sample]);
            }
            ce
        })
        .collect();

    let mut total = partials.iter().sum::<f64>() / n as f64;
    if lambda != 0.0 {
        total += lambda * dot(theta, theta);
    }
    total
}

/// Forward pass that keeps only the current hidden state (no cache).
struct RollingForward {
    spec: NetSpec,
    state: Vec<f64>,
    next: Vec<f64>,
    logits: Vec<f64>,
}

impl RollingForward {
    fn new(spec: &NetSpec) -> Self {
        RollingForward {
            spec: *spec,
            state: vec![0.0; spec.width],
            next: vec![0.0; spec.width],
            logits: vec![0.0; spec.num_classes],
        }
    }

    fn logits(&mut self, theta: &[f64], input: &[f64]) -> &[f64] {
        let spec = &self.spec;
        let w = spec.width;
        let head = spec.head_len();
        let stride = spec.block_stride();

        let (weight, bias) = theta[..head].split_at(w * spec.input_dim);
        matvec_into(weight, w, spec.input_dim, input, &mut self.state);
        for (y, b) in self.state.iter_mut().zip(bias) {
            *y += b;
        }

        for n in 0..spec.depth {
            let block = &theta[head + n * stride..head + (n + 1) * stride];
            let (weight, bias) = block.split_at(w * w);
            matvec_into(weight, w, w, &self.state, &mut self.next);
            for ((y, u), b) in self.state.iter_mut().zip(&self.next).zip(bias) {
                let ui = u + b;
                if ui > 0.0 {
                    *y += spec.dt * ui;
                }
            }
        }

        let tail = &theta[spec.tail_offset()..];
        let (weight, bias) = tail.split_at(spec.num_classes * w);
        matvec_into(weight, spec.num_classes, w, &self.state, &mut self.logits);
        for (z, b) in self.logits.iter_mut().zip(bias) {
            *z += b;
        }
        &self.logits
    }
}

/// Mean cross-entropy and accuracy over a dataset. Deterministic: ties in the
/// argmax resolve to the lowest class index.
pub fn evaluate(spec: &NetSpec, theta: &[f64], inputs: &[f64], labels: &[usize]) -> (f64, f64) {
    assert_eq!(theta.len(), spec.param_len(), "parameter length mismatch");
    let n = labels.len();
    assert_eq!(
        inputs.len(),
        n * spec.input_dim,
        "input/label count mismatch"
    );

    let partials: Vec<(f64, usize)> = chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            let mut rolling = RollingForward::new(spec);
            let mut ce = 0.0;
            let mut correct = 0usize;
            for sample in range {
                let input = &inputs[sample * spec.input_dim..(sample + 1) * spec.input_dim];
                let logits = rolling.logits(theta, input);
                ce -= log_softmax_at(logits, labels[sample]);
                let mut best = 0;
                for (c, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = c;
                    }
                }
                if best == labels[sample] {
                    correct += 1;
                }
            }
            (ce, correct)
        })
        .collect();

    let mut ce = 0.0;
    let mut correct = 0usize;
    for (c, k) in partials {
        ce += c;
        correct += k;
    }
    (ce / n as f64, correct as f64 / n as f64)
}

/// Checks that a parameter or gradient vector is free of NaN/inf.
pub fn check_finite(v: &[f64]) -> bool {
    all_finite(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_spec() -> NetSpec {
        NetSpec::new(5, 3, 3, 4, 0.1)
    }

    fn random_theta(spec: &NetSpec, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        // random biases too, so gradient checks exercise every path
        (0..spec.param_len())
            .map(|_| rng.uniform_in(-0.6, 0.6))
            .collect()
    }

    fn random_batch(spec: &NetSpec, n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let inputs = (0..n * spec.input_dim)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        let labels = (0..n).map(|_| rng.below(spec.num_classes)).collect();
        (inputs, labels)
    }

    /// Central-difference gradient, the independent oracle for `backward`.
    fn finite_difference_grad(
        spec: &NetSpec,
        theta: &[f64],
        inputs: &[f64],
        labels: &[usize],
        lambda: f64,
        h: f64,
    ) -> Vec<f64> {
        let mut fd = vec![0.0; theta.len()];
        let mut probe = theta.to_vec();
        for i in 0..theta.len() {
            probe[i] = theta[i] + h;
            let up = batch_loss(spec, &probe, inputs, labels, lambda);
            probe[i] = theta[i] - h;
            let down = batch_loss(spec, &probe, inputs, labels, lambda);
            probe[i] = theta[i];
            fd[i] = (up - down) / (2.0 * h);
        }
        fd
    }

    #[test]
    fn zero_blocks_reduce_to_affine_composition() {
        let spec = NetSpec::new(4, 3, 2, 6, 0.1);
        let mut rng = SeededRng::new(1);
        let mut params = NetParams::xavier(&spec, &mut rng);
        for b in &mut params.blocks {
            b.weight = Matrix::zeros(3, 3);
            b.bias = vec![0.0; 3];
        }
        let theta = params.flatten();
        let (inputs, _) = random_batch(&spec, 5, 2);

        let cache = forward(&spec, &theta, &inputs);
        for s in 0..5 {
            // hidden trajectory is constant
            assert_eq!(cache.state(s, 0), cache.state(s, spec.depth));
            // logits equal the affine composition gL(gF(x))
            let x = &inputs[s * 4..(s + 1) * 4];
            let mut y0 = params.input_weight.matvec(x);
            for (y, b) in y0.iter_mut().zip(&params.input_bias) {
                *y += b;
            }
            let mut z = params.output_weight.matvec(&y0);
            for (zi, b) in z.iter_mut().zip(&params.output_bias) {
                *zi += b;
            }
            for (a, b) in cache.logits(s).iter().zip(&z) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn single_block_hand_forward() {
        // N=1, w=1, W=(1), b=(0), dt=0.5, y0=2 -> y1 = 2 + 0.5*2 = 3
        let spec = NetSpec::new(1, 1, 1, 1, 0.5);
        // theta = [W_in, b_in, W_0, b_0, W_out, b_out]
        let theta = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let cache = forward(&spec, &theta, &[2.0]);
        assert_eq!(cache.state(0, 1), &[3.0]);
        assert_eq!(cache.logits(0), &[3.0]);
    }

    #[test]
    fn doubling_dt_changes_output() {
        let spec_a = NetSpec::new(5, 3, 3, 4, 0.1);
        let spec_b = NetSpec { dt: 0.2, ..spec_a };
        let theta = random_theta(&spec_a, 3);
        let (inputs, _) = random_batch(&spec_a, 3, 4);
        let ca = forward(&spec_a, &theta, &inputs);
        let cb = forward(&spec_b, &theta, &inputs);
        assert_ne!(ca.logits(0), cb.logits(0));
    }

    #[test]
    fn single_block_update_is_linear_in_dt() {
        let base = NetSpec::new(2, 3, 2, 1, 0.25);
        let theta = random_theta(&base, 9);
        let (inputs, _) = random_batch(&base, 1, 10);
        let delta = |dt: f64| -> Vec<f64> {
            let spec = NetSpec { dt, ..base };
            let cache = forward(&spec, &theta, &inputs);
            cache
                .state(0, 1)
                .iter()
                .zip(cache.state(0, 0))
                .map(|(a, b)| a - b)
                .collect()
        };
        let d1 = delta(0.25);
        let d2 = delta(0.5);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_uniform_logits_is_log_num_classes() {
        let logits = vec![0.7; 10 * 3];
        let labels = vec![0, 5, 9];
        let l = loss(&logits[..30], &labels, &[0.0], 0.0);
        assert!((l - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_confident_correct_logits_is_near_zero() {
        let mut logits = vec![0.0; 10];
        logits[4] = 1000.0;
        let l = loss(&logits, &[4], &[0.0], 0.0);
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn loss_regularizer_only() {
        let mut logits = vec![0.0; 10];
        logits[2] = 1000.0;
        // ||theta||^2 = 0.25
        let theta = vec![0.5, 0.0, 0.0];
        let l = loss(&logits, &[2], &theta, 1.0);
        assert!((l - 0.25).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = small_spec();
        let theta = random_theta(&spec, 11);
        let (inputs, labels) = random_batch(&spec, 7, 12);
        let (_, grad) = loss_and_grad(&spec, &theta, &inputs, &labels, 0.0);
        let fd = finite_difference_grad(&spec, &theta, &inputs, &labels, 0.0, 1e-5);
        for i in 0..theta.len() {
            if grad[i].abs() > 1e-8 {
                let rel = (grad[i] - fd[i]).abs() / grad[i].abs();
                assert!(
                    rel < 1e-5,
                    "coordinate {i}: analytic {} vs fd {} (rel {rel})",
                    grad[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn dead_block_gets_zero_gradient() {
        let spec = NetSpec::new(3, 2, 2, 2, 0.1);
        let mut rng = SeededRng::new(20);
        let mut params = NetParams::xavier(&spec, &mut rng);
        // block 0: zero weights, strongly negative bias -> ReLU always off
        params.blocks[0].weight = Matrix::zeros(2, 2);
        params.blocks[0].bias = vec![-5.0, -5.0];
        let theta = params.flatten();
        let (inputs, labels) = random_batch(&spec, 6, 21);
        let (_, grad) = loss_and_grad(&spec, &theta, &inputs, &labels, 0.0);
        let off = spec.block_offset(0);
        for (i, g) in grad[off..off + spec.block_stride()].iter().enumerate() {
            assert_eq!(
                *g, 0.0,
                "dead block coordinate {i} should have zero gradient"
            );
        }
        // gradient still flows through the shortcut to the input map
        assert!(grad[..spec.head_len()].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn lambda_adds_exactly_two_lambda_theta() {
        let spec = small_spec();
        let theta = random_theta(&spec, 30);
        let (inputs, labels) = random_batch(&spec, 5, 31);
        let (_, g0) = loss_and_grad(&spec, &theta, &inputs, &labels, 0.0);
        let lambda = 0.37;
        let (_, g1) = loss_and_grad(&spec, &theta, &inputs, &labels, lambda);
        for i in 0..theta.len() {
            assert_eq!(g1[i], g0[i] + 2.0 * lambda * theta[i]);
        }
    }

    #[test]
    fn fused_path_matches_forward_backward() {
        let spec = small_spec();
        let theta = random_theta(&spec, 40);
        let (inputs, labels) = random_batch(&spec, 130, 41); // spans multiple chunks
        let cache = forward(&spec, &theta, &inputs);
        let l_split = loss(cache.all_logits(), &labels, &theta, 0.01);
        let g_split = backward(&spec, &theta, &inputs, &cache, &labels, 0.01);
        let (l_fused, g_fused) = loss_and_grad(&spec, &theta, &inputs, &labels, 0.01);
        assert_eq!(l_split, l_fused);
        assert_eq!(g_split, g_fused);
        let l_only = batch_loss(&spec, &theta, &inputs, &labels, 0.01);
        assert_eq!(l_only, l_fused);
    }

    #[test]
    fn evaluate_single_correct_sample() {
        let spec = NetSpec::new(1, 1, 2, 1, 0.5);
        // output map sends state to (y, -y); positive state classifies as 0
        let theta = vec![1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0];
        let (_, acc) = evaluate(&spec, &theta, &[2.0], &[0]);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn evaluate_random_net_is_near_chance() {
        let spec = NetSpec::new(8, 10, 10, 4, 0.05);
        let mut rng = SeededRng::new(50);
        let theta = NetParams::xavier(&spec, &mut rng).flatten();
        let n = 2000;
        let (inputs, labels) = random_batch(&spec, n, 51);
        let (_, acc) = evaluate(&spec, &theta, &inputs, &labels);
        assert!(
            acc > 0.04 && acc < 0.2,
            "accuracy {acc} not near chance level 0.1"
        );
    }

    #[test]
    fn evaluate_is_deterministic() {
        let spec = small_spec();
        let theta = random_theta(&spec, 60);
        let (inputs, labels) = random_batch(&spec, 200, 61);
        let a = evaluate(&spec, &theta, &inputs, &labels);
        let b = evaluate(&spec, &theta, &inputs, &labels);
        assert_eq!(a, b);
    }

    #[test]
    fn loss_invariant_under_batch_reordering() {
        let spec = small_spec();
        let theta = random_theta(&spec, 70);
        let (inputs, labels) = random_batch(&spec, 9, 71);
        let l = batch_loss(&spec, &theta, &inputs, &labels, 0.0);
        // reverse the batch
        let mut rev_inputs = Vec::new();
        let mut rev_labels = Vec::new();
        for s in (0..9).rev() {
            rev_inputs.extend_from_slice(&inputs[s * 5..(s + 1) * 5]);
            rev_labels.push(labels[s]);
        }
        let lr = batch_loss(&spec, &theta, &rev_inputs, &rev_labels, 0.0);
        assert!((l - lr).abs() < 1e-12 * l.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn flatten_unflatten_round_trips(seed in 0u64..1000) {
            let spec = NetSpec::new(4, 3, 2, 5, 0.1);
            let mut rng = SeededRng::new(seed);
            let params = NetParams::xavier(&spec, &mut rng);
            let theta = params.flatten();
            prop_assert_eq!(theta.len(), spec.param_len());
            let back = NetParams::unflatten(&spec, &theta);
            prop_assert_eq!(back.flatten(), theta);
        }
    }
}
