use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Geometry, Kind, Layer};
use crate::edm::{assemble_final, DistanceMatrix};
use crate::error::{Error, Result};
use crate::pose::JointMask;

/// Architecture of the fully-convolutional EDM regressor.
///
/// With the defaults the spatial chain is 14 → 7 → 4 → 7 → 14: two 5×5
/// stride-2 convolutions, two 5×5 stride-2 transposed convolutions (ReLU
/// after each of the four) and a final linear 1×1 convolution that folds
/// the channels into one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub n: usize,
    pub channels: usize,
    pub kernel: usize,
    pub weight_init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { n: 14, channels: 64, kernel: 5, weight_init_scale: 6f64.sqrt() }
    }
}

impl NetConfig {
    pub fn with_channels(channels: usize) -> Self {
        NetConfig { channels, ..Default::default() }
    }

    /// Spatial size after each layer, starting with the input.
    pub fn sizes(&self) -> [usize; 6] {
        let down = |n: usize| (n + 2 * self.pad() - self.kernel) / 2 + 1;
        let s1 = down(self.n);
        let s2 = down(s1);
        [self.n, s1, s2, s1, self.n, self.n]
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::invalid("channels must be >= 1 and the kernel size odd"));
        }
        if self.n < 2 {
            return Err(Error::invalid("input must be at least 2x2"));
        }
        let [_, s1, s2, ..] = self.sizes();
        if s1 == 0 || s2 == 0 {
            return Err(Error::invalid("input too small for two stride-2 convolutions"));
        }
        if !(self.weight_init_scale >= 0.0 && self.weight_init_scale.is_finite()) {
            return Err(Error::invalid("weight_init_scale must be finite and >= 0"));
        }
        Ok(())
    }

    pub(crate) fn layers(&self) -> [Layer; 5] {
        let [n, s1, s2, ..] = self.sizes();
        let c = self.channels;
        let (k, p) = (self.kernel, self.pad());
        let g = |small, big| Geometry { kernel: k, stride: 2, pad: p, small, big };
        [
            Layer { kind: Kind::Conv, cin: 1, cout: c, geom: g(s1, n), relu: true },
            Layer { kind: Kind::Conv, cin: c, cout: c, geom: g(s2, s1), relu: true },
            Layer { kind: Kind::Transposed, cin: c, cout: c, geom: g(s2, s1), relu: true },
            Layer { kind: Kind::Transposed, cin: c, cout: c, geom: g(s1, n), relu: true },
            Layer {
                kind: Kind::Conv,
                cin: c,
                cout: 1,
                geom: Geometry { kernel: 1, stride: 1, pad: 0, small: n, big: n },
                relu: false,
            },
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(Layer::param_len).sum()
    }
}

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "deconv1", "deconv2", "conv3"];

/// All weights and biases, flattened layer by layer (weights, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetConfig,
    data: Vec<f64>,
}

/// Deterministic initialization: weights uniform in `±scale/√fan_in`, zero biases.
pub fn net_init(config: NetConfig, seed: u64) -> Result<NetworkParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(config.param_count());
    for layer in config.layers() {
        let s = config.weight_init_scale / (layer.fan_in() as f64).sqrt();
        for _ in 0..layer.weight_len() {
            let u: f64 = rng.random_range(-1.0..1.0);
            data.push(u * s);
        }
        data.extend(std::iter::repeat_n(0.0, layer.cout));
    }
    Ok(NetworkParams { config, data })
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[i+1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    /// Sign pattern of every ReLU, used to spot kinks in gradient checks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.acts[1..self.acts.len() - 1].iter().flatten().map(|v| *v > 0.0).collect()
    }
}

impl NetworkParams {
    pub fn from_parts(config: NetConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.param_count() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", config.param_count(), data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(NetworkParams { config, data })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(name, weights, biases)` per layer in declared order.
    pub fn layer_tensors(&self) -> Vec<(&'static str, &[f64], &[f64])> {
        let mut off = 0;
        self.config
            .layers()
            .iter()
            .zip(LAYER_NAMES)
            .map(|(l, name)| {
                let w = &self.data[off..off + l.weight_len()];
                let b = &self.data[off + l.weight_len()..off + l.param_len()];
                off += l.param_len();
                (name, w, b)
            })
            .collect()
    }

    pub(crate) fn trace(&self, input: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(6);
        acts.push(input.to_vec());
        let mut off = 0;
        for layer in self.config.layers() {
            let p = &self.data[off..off + layer.param_len()];
            let mut out = layer.forward(p, acts.last().unwrap());
            if layer.relu {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
            off += layer.param_len();
        }
        Trace { acts }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the raw output) through the
    /// trace, accumulating into `grad`; returns the input gradient when asked.
    pub(crate) fn backprop(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64], need_input: bool) -> Vec<f64> {
        let layers = self.config.layers();
        let mut offsets = Vec::with_capacity(5);
        let mut off = 0;
        for l in &layers {
            offsets.push(off);
            off += l.param_len();
        }
        let mut d = d_out.to_vec();
        for (i, layer) in layers.iter().enumerate().rev() {
            if layer.relu {
                // the post-ReLU value is zero exactly where the unit is off
                d.iter_mut().zip(&trace.acts[i + 1]).for_each(|(g, a)| {
                    if *a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let range = offsets[i]..offsets[i] + layer.param_len();
            let want_input = i > 0 || need_input;
            d = layer.backward(&self.data[range.clone()], &trace.acts[i], &d, &mut grad[range], want_input);
        }
        d
    }

    /// Raw `n×n` output, row-major, without symmetrization.
    pub fn forward(&self, input: &DistanceMatrix) -> Result<Vec<f64>> {
        self.forward_raw(input.as_slice())
    }

    pub fn forward_raw(&self, input: &[f64]) -> Result<Vec<f64>> {
        let n = self.config.n;
        if input.len() != n * n {
            return Err(Error::invalid(format!("network expects a {n}x{n} input, got {} entries", input.len())));
        }
        Ok(self.trace(input).acts.pop().unwrap())
    }
}

/// Mean squared error over the batch and all entries of the raw output, and
/// its exact gradient.
pub fn loss_and_grad(params: &NetworkParams, batch: &[(&[f64], &[f64])]) -> Result<(f64, Vec<f64>)> {
    super::train::batch_loss_and_grad(params, batch)
}

/// `max |out - outᵀ|` of a raw prediction.
pub fn asymmetry(raw: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((raw[i * n + j] - raw[j * n + i]).abs());
        }
    }
    worst
}

/// Averages a raw prediction with its transpose, zeroes the diagonal and
/// clamps negatives, yielding a valid distance matrix.
pub fn symmetrize_and_clamp(raw: &[f64], n: usize) -> Result<DistanceMatrix> {
    if raw.len() != n * n {
        return Err(Error::invalid("raw output has the wrong size"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite network output"));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (0.5 * (raw[i * n + j] + raw[j * n + i])).max(0.0);
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix::from_vec_unchecked(n, data))
}

#[derive(Debug, Clone)]
pub struct NetRecovery {
    pub matrix: DistanceMatrix,
    pub asymmetry: f64,
}

/// Network prediction spliced into the occluded rows and columns.
pub fn recover_with_net(params: &NetworkParams, occluded: &DistanceMatrix, mask: &JointMask) -> Result<NetRecovery> {
    let n = params.config.n;
    let raw = params.forward(occluded)?;
    let asym = asymmetry(&raw, n);
    let predicted = symmetrize_and_clamp(&raw, n)?;
    Ok(NetRecovery { matrix: assemble_final(occluded, &predicted, mask)?, asymmetry: asym })
}

/// Gradient check result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub max_relative_error: f64,
    pub parameter_checked_count: usize,
    /// Parameters skipped because the ±step probe crossed a ReLU kink.
    pub skipped_at_kinks: usize,
}

/// Compares the analytic gradient with central finite differences on
/// `count` randomly chosen parameters.
pub fn grad_check(
    params: &NetworkParams,
    batch: &[(&[f64], &[f64])],
    count: usize,
    step: f64,
    seed: u64,
) -> Result<GradReport> {
    let (_, analytic) = loss_and_grad(params, batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let patterns =
        |p: &NetworkParams| -> Vec<Vec<bool>> { batch.iter().map(|(x, _)| p.trace(x).relu_pattern()).collect() };
    while checked < count {
        if skipped > 10 * count {
            return Err(Error::invalid("too many parameters sit on ReLU kinks"));
        }
        let i = rng.random_range(0..params.len());
        let orig = params.data[i];
        probe.data[i] = orig + step;
        let (plus, pat_plus) = (super::train::batch_loss(&probe, batch), patterns(&probe));
        probe.data[i] = orig - step;
        let (minus, pat_minus) = (super::train::batch_loss(&probe, batch), patterns(&probe));
        probe.data[i] = orig;
        if pat_plus != pat_minus {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
        checked += 1;
    }
    Ok(GradReport { max_relative_error: worst, parameter_checked_count: checked, skipped_at_kinks: skipped })
}
