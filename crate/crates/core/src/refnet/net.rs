//! Parameters, forward pass and backpropagation, all in f64. The network
//! is small enough that exact reproducibility and gradient-check fidelity
//! outrank speed.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{stream_for_purpose, SplitMix64};

use super::arch::{CnnArchitecture, LayerSpec, Shape3};

/// Weight and bias storage for one layer; both empty for ReLU/pool.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    fn zeros(wlen: usize, blen: usize) -> Self {
        LayerParams {
            weights: vec![0.0; wlen],
            biases: vec![0.0; blen],
        }
    }
}

/// All trainable tensors of a network plus its architecture and the seed
/// used at init.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnParameters {
    arch: CnnArchitecture,
    seed: u64,
    layers: Vec<LayerParams>,
}

fn next_normal(stream: &mut SplitMix64) -> f64 {
    // Box-Muller; u1 shifted into (0, 1] so ln never sees zero.
    let u1 = 1.0 - stream.next_f64();
    let u2 = stream.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// He-style init: weights ~ Normal(0, sqrt(2/fan_in)), biases zero.
/// Deterministic given the seed.
pub fn init_params(arch: &CnnArchitecture, seed: u64) -> CnnParameters {
    let mut stream = stream_for_purpose(seed, "refnet-init", 0);
    let mut layers = Vec::with_capacity(arch.layers().len());
    for (i, layer) in arch.layers().iter().enumerate() {
        let (wlen, blen) = arch.param_lens(i);
        let fan_in = match *layer {
            LayerSpec::Conv { kernel, .. } => kernel * kernel * arch.input_shape_of(i).c,
            LayerSpec::FullyConnected { .. } => arch.input_shape_of(i).len(),
            _ => 0,
        };
        let mut lp = LayerParams::zeros(wlen, blen);
        if fan_in > 0 {
            let std = (2.0 / fan_in as f64).sqrt();
            for w in lp.weights.iter_mut() {
                *w = next_normal(&mut stream) * std;
            }
        }
        layers.push(lp);
    }
    CnnParameters {
        arch: arch.clone(),
        seed,
        layers,
    }
}

impl CnnParameters {
    pub fn arch(&self) -> &CnnArchitecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub(super) fn from_parts(
        arch: CnnArchitecture,
        seed: u64,
        layers: Vec<LayerParams>,
    ) -> Result<Self> {
        for (i, lp) in layers.iter().enumerate() {
            let (wlen, blen) = arch.param_lens(i);
            if lp.weights.len() != wlen || lp.biases.len() != blen {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "layer {i}: tensor lengths ({}, {}) do not match architecture ({wlen}, {blen})",
                        lp.weights.len(),
                        lp.biases.len()
                    ),
                });
            }
            if lp.weights.iter().chain(&lp.biases).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "layer {i}: non-finite parameter value"
                )));
            }
        }
        if layers.len() != arch.layers().len() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "parameter count {} does not match layer count {}",
                    layers.len(),
                    arch.layers().len()
                ),
            });
        }
        Ok(CnnParameters { arch, seed, layers })
    }

    /// Gradient/velocity buffer with the same tensor shapes, all zero.
    pub fn zeros_like(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .map(|lp| LayerParams::zeros(lp.weights.len(), lp.biases.len()))
            .collect()
    }
}

/// Per-layer activations captured during a forward pass; activations[0]
/// is the input, activations[i+1] the output of layer i.
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

fn conv_forward(
    input: &[f64],
    shape: Shape3,
    kernel: usize,
    out_channels: usize,
    lp: &LayerParams,
    out_shape: Shape3,
) -> Vec<f64> {
    let (h, w, c) = (shape.h, shape.w, shape.c);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let ksz = kernel * c;
    let mut out = vec![0.0; oh * ow * out_channels];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * out_channels;
            for o in 0..out_channels {
                let mut acc = lp.biases[o];
                for ky in 0..kernel {
                    let in_off = ((oy + ky) * w + ox) * c;
                    let wt_off = (o * kernel + ky) * ksz;
                    let xs = &input[in_off..in_off + ksz];
                    let ws = &lp.weights[wt_off..wt_off + ksz];
                    acc += xs.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>();
                }
                out[base + o] = acc;
            }
        }
    }
    debug_assert_eq!(h - kernel + 1, oh);
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    shape: Shape3,
    kernel: usize,
    out_channels: usize,
    lp: &LayerParams,
    out_shape: Shape3,
    dy: &[f64],
    grad: &mut LayerParams,
) -> Vec<f64> {
    let (w, c) = (shape.w, shape.c);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let ksz = kernel * c;
    let mut dx = vec![0.0; input.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * out_channels;
            for o in 0..out_channels {
                let g = dy[base + o];
                if g == 0.0 {
                    continue;
                }
                grad.biases[o] += g;
                for ky in 0..kernel {
                    let in_off = ((oy + ky) * w + ox) * c;
                    let wt_off = (o * kernel + ky) * ksz;
                    for i in 0..ksz {
                        grad.weights[wt_off + i] += g * input[in_off + i];
                        dx[in_off + i] += g * lp.weights[wt_off + i];
                    }
                }
            }
        }
    }
    dx
}

/// Argmax position within one pooling window, scanning rows then columns;
/// strictly-greater updates make the first maximal element win, so
/// forward and backward agree on tie-breaking.
#[inline]
fn pool_argmax(
    input: &[f64],
    shape: Shape3,
    size: usize,
    stride: usize,
    oy: usize,
    ox: usize,
    ch: usize,
) -> usize {
    let (w, c) = (shape.w, shape.c);
    let mut best_idx = ((oy * stride) * w + ox * stride) * c + ch;
    let mut best = input[best_idx];
    for ky in 0..size {
        for kx in 0..size {
            let idx = ((oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
            if input[idx] > best {
                best = input[idx];
                best_idx = idx;
            }
        }
    }
    best_idx
}

fn pool_forward(input: &[f64], shape: Shape3, size: usize, stride: usize, out_shape: Shape3) -> Vec<f64> {
    let (oh, ow) = (out_shape.h, out_shape.w);
    let c = shape.c;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let idx = pool_argmax(input, shape, size, stride, oy, ox, ch);
                out[(oy * ow + ox) * c + ch] = input[idx];
            }
        }
    }
    out
}

fn pool_backward(
    input: &[f64],
    shape: Shape3,
    size: usize,
    stride: usize,
    out_shape: Shape3,
    dy: &[f64],
) -> Vec<f64> {
    let (oh, ow) = (out_shape.h, out_shape.w);
    let c = shape.c;
    let mut dx = vec![0.0; input.len()];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let idx = pool_argmax(input, shape, size, stride, oy, ox, ch);
                dx[idx] += dy[(oy * ow + ox) * c + ch];
            }
        }
    }
    dx
}

fn fc_forward(input: &[f64], units: usize, lp: &LayerParams) -> Vec<f64> {
    let n = input.len();
    (0..units)
        .map(|o| {
            let ws = &lp.weights[o * n..(o + 1) * n];
            lp.biases[o] + input.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

fn fc_backward(
    input: &[f64],
    units: usize,
    lp: &LayerParams,
    dy: &[f64],
    grad: &mut LayerParams,
) -> Vec<f64> {
    let n = input.len();
    let mut dx = vec![0.0; n];
    for (o, &g) in dy.iter().enumerate().take(units) {
        grad.biases[o] += g;
        if g == 0.0 {
            continue;
        }
        let ws = &lp.weights[o * n..(o + 1) * n];
        let gw = &mut grad.weights[o * n..(o + 1) * n];
        for i in 0..n {
            gw[i] += g * input[i];
            dx[i] += g * ws[i];
        }
    }
    dx
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Run the network on one normalized input (length input_side^2 * 3,
/// values in [0, 1]). Returns class probabilities and the activation
/// cache needed for backprop.
pub fn forward(params: &CnnParameters, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let arch = &params.arch;
    if input.len() != arch.input_len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "input length {} does not match expected {} ({0}x{0}x3 flattened)",
                input.len(),
                arch.input_len()
            ),
        });
    }
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(arch.layers().len() + 1);
    activations.push(input.to_vec());
    for (i, layer) in arch.layers().iter().enumerate() {
        let shape = arch.input_shape_of(i);
        let out_shape = arch.output_shape_of(i);
        let x = activations.last().unwrap();
        let y = match *layer {
            LayerSpec::Conv {
                kernel,
                out_channels,
            } => conv_forward(x, shape, kernel, out_channels, &params.layers[i], out_shape),
            LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            LayerSpec::MaxPool { size, stride } => pool_forward(x, shape, size, stride, out_shape),
            LayerSpec::FullyConnected { units } => fc_forward(x, units, &params.layers[i]),
        };
        debug_assert_eq!(y.len(), out_shape.len(), "layer {i} output length");
        activations.push(y);
    }
    let probs = softmax(activations.last().unwrap());
    Ok((probs, ForwardCache { activations }))
}

/// Mean cross-entropy over the batch and its gradient with the same
/// structure as the parameters. Labels index the class dimension.
pub fn loss_and_grad(
    params: &CnnParameters,
    batch: &[(&[f64], usize)],
) -> Result<(f64, Vec<LayerParams>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let num_classes = params.arch.num_classes();
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;

    for &(input, label) in batch {
        if label >= num_classes {
            return Err(Error::validation(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        let (probs, cache) = forward(params, input)?;
        loss -= probs[label].ln() * scale;

        // Softmax + cross-entropy head: d logits = (p - onehot) / B.
        let mut delta: Vec<f64> = probs.iter().map(|&p| p * scale).collect();
        delta[label] -= scale;

        for i in (0..params.arch.layers().len()).rev() {
            let shape = params.arch.input_shape_of(i);
            let out_shape = params.arch.output_shape_of(i);
            let x = &cache.activations[i];
            delta = match params.arch.layers()[i] {
                LayerSpec::Conv {
                    kernel,
                    out_channels,
                } => conv_backward(
                    x,
                    shape,
                    kernel,
                    out_channels,
                    &params.layers[i],
                    out_shape,
                    &delta,
                    &mut grads[i],
                ),
                LayerSpec::Relu => x
                    .iter()
                    .zip(delta.iter())
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect(),
                LayerSpec::MaxPool { size, stride } => {
                    pool_backward(x, shape, size, stride, out_shape, &delta)
                }
                LayerSpec::FullyConnected { units } => {
                    fc_backward(x, units, &params.layers[i], &delta, &mut grads[i])
                }
            };
        }
    }

    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "batch evaluation".into(),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                context: format!("gradient of layer {i}"),
            });
        }
    }
    Ok((loss, grads))
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}
