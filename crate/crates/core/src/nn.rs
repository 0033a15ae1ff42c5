//! Split feedforward classifier with hand-written reverse-mode gradients.
//!
//! A network is a chain of dense layers. The first `split_index` layers form
//! the device-side encoder, the remaining layers the base-station decoder.
//! Whatever sits between the two halves (nothing, a quantizer, a full
//! wireless link) is modelled by a [`FeatureLink`]; its backward pass is the
//! identity.
//!
//! Flat parameter layout: layers in order, each layer stores its weight
//! matrix row-major (`out` rows of `in` columns) followed by its `out` biases.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default loss clip `b`.
pub const DEFAULT_CLIP: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths, hidden activations and the encoder/decoder boundary.
///
/// `activations[l]` applies to hidden layer `l`; the last layer always emits
/// raw logits consumed by a softmax head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub split_index: usize,
}

impl NetworkSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        split_index: usize,
    ) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activations,
            split_index,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("network needs at least an input and an output width"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.output_width() < 2 {
            return Err(Error::config("classification head needs at least two classes"));
        }
        if self.activations.len() != self.num_layers() - 1 {
            return Err(Error::config(format!(
                "expected {} hidden activations, got {}",
                self.num_layers() - 1,
                self.activations.len()
            )));
        }
        if self.split_index > self.num_layers() {
            return Err(Error::config(format!(
                "split index {} exceeds layer count {}",
                self.split_index,
                self.num_layers()
            )));
        }
        Ok(())
    }

    /// Number of dense layers (weight matrices).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Width of the vector crossing the encoder/decoder boundary.
    pub fn feature_width(&self) -> usize {
        self.layer_sizes[self.split_index]
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            self.activations[layer]
        }
    }

    /// Total parameter count `D`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.layer_sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Short stable digest of the canonical JSON form, recorded in snapshots.
    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

/// Flat vector of all weights and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.param_count());
        for w in spec.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self(values)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weight matrix (row-major) and bias of one layer.
    pub fn layer<'a>(&'a self, spec: &NetworkSpec, layer: usize) -> (&'a [f64], &'a [f64]) {
        let (rows, cols) = (spec.layer_sizes[layer + 1], spec.layer_sizes[layer]);
        let start = spec.layer_offset(layer);
        let weights = &self.0[start..start + rows * cols];
        let bias = &self.0[start + rows * cols..start + rows * cols + rows];
        (weights, bias)
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.0.len() != spec.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, network expects {}",
                self.0.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }

    /// Hex digest of the raw little-endian bytes, used as a snapshot fingerprint.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.0 {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Text snapshot: a three-line header (magic, `dim D`, `spec <hash>`)
    /// followed by one value per line in shortest round-trip form.
    pub fn write_snapshot<W: Write>(&self, spec: &NetworkSpec, mut out: W) -> Result<()> {
        self.check(spec)?;
        writeln!(out, "wdl-params v1")?;
        writeln!(out, "dim {}", self.0.len())?;
        writeln!(out, "spec {}", spec.spec_hash())?;
        for v in &self.0 {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(spec: &NetworkSpec, input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::input(format!("snapshot truncated before {what}")))
        };
        if next("magic")?.trim() != "wdl-params v1" {
            return Err(Error::input("not a wdl parameter snapshot"));
        }
        let dim: usize = next("dim")?
            .trim()
            .strip_prefix("dim ")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::input("malformed dim header"))?;
        let hash = next("spec")?;
        let hash = hash
            .trim()
            .strip_prefix("spec ")
            .ok_or_else(|| Error::input("malformed spec header"))?;
        if dim != spec.param_count() || hash != spec.spec_hash() {
            return Err(Error::config(format!(
                "snapshot (dim {dim}, spec {hash}) does not match network (dim {}, spec {})",
                spec.param_count(),
                spec.spec_hash()
            )));
        }
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            let line = next("value")?;
            values.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::input(format!("bad value {line:?}: {e}")))?,
            );
        }
        Ok(Self(values))
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probabilities = exps.into_iter().map(|e| e / total).collect();
        Self {
            logits,
            probabilities,
        }
    }

    pub fn predicted_class(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    /// Unclipped `-ln p[label]` computed from the logits.
    pub fn neg_log_likelihood(&self, label: usize) -> f64 {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = self.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - (self.logits[label] - max)
    }
}

/// Transformation applied to the encoder output before the decoder sees it.
///
/// Backpropagation treats every link as the identity map.
pub trait FeatureLink {
    fn transmit(&mut self, feature: &[f64]) -> Result<Vec<f64>>;
}

/// Encoder output handed to the decoder unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct CleanLink;

impl FeatureLink for CleanLink {
    fn transmit(&mut self, feature: &[f64]) -> Result<Vec<f64>> {
        Ok(feature.to_vec())
    }
}

impl<L: FeatureLink + ?Sized> FeatureLink for &mut L {
    fn transmit(&mut self, feature: &[f64]) -> Result<Vec<f64>> {
        (**self).transmit(feature)
    }
}

fn dense(
    spec: &NetworkSpec,
    params: &ParameterVector,
    layer: usize,
    input: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (weights, bias) = params.layer(spec, layer);
    let act = spec.activation(layer);
    let cols = input.len();
    let pre: Vec<f64> = bias
        .iter()
        .enumerate()
        .map(|(r, &b)| {
            let row = &weights[r * cols..(r + 1) * cols];
            row.iter().zip(input).fold(b, |acc, (w, x)| acc + w * x)
        })
        .collect();
    let out = pre.iter().map(|&z| act.apply(z)).collect();
    (pre, out)
}

fn run_layers(
    spec: &NetworkSpec,
    params: &ParameterVector,
    layers: std::ops::Range<usize>,
    input: &[f64],
) -> Vec<f64> {
    let mut act = input.to_vec();
    for layer in layers {
        act = dense(spec, params, layer, &act).1;
    }
    act
}

fn check_inputs(spec: &NetworkSpec, params: &ParameterVector, x: &[f64]) -> Result<()> {
    params.check(spec)?;
    if x.len() != spec.input_width() {
        return Err(Error::config(format!(
            "input has width {}, network expects {}",
            x.len(),
            spec.input_width()
        )));
    }
    Ok(())
}

pub fn forward(spec: &NetworkSpec, params: &ParameterVector, x: &[f64]) -> Result<Prediction> {
    let (feature, decoder) = split_forward(spec, params, x)?;
    decoder.resume(&feature)
}

/// Decoder half of a network, bound to its parameters.
#[derive(Clone, Copy, Debug)]
pub struct Decoder<'a> {
    spec: &'a NetworkSpec,
    params: &'a ParameterVector,
}

impl Decoder<'_> {
    pub fn resume(&self, feature: &[f64]) -> Result<Prediction> {
        if feature.len() != self.spec.feature_width() {
            return Err(Error::config(format!(
                "feature has width {}, decoder expects {}",
                feature.len(),
                self.spec.feature_width()
            )));
        }
        let logits = run_layers(
            self.spec,
            self.params,
            self.spec.split_index..self.spec.num_layers(),
            feature,
        );
        Ok(Prediction::from_logits(logits))
    }
}

/// Runs the encoder and returns its output with the decoder that consumes it.
pub fn split_forward<'a>(
    spec: &'a NetworkSpec,
    params: &'a ParameterVector,
    x: &[f64],
) -> Result<(Vec<f64>, Decoder<'a>)> {
    check_inputs(spec, params, x)?;
    let feature = run_layers(spec, params, 0..spec.split_index, x);
    Ok((feature, Decoder { spec, params }))
}

/// Encoder, link, decoder.
pub fn forward_through<L: FeatureLink + ?Sized>(
    spec: &NetworkSpec,
    params: &ParameterVector,
    x: &[f64],
    link: &mut L,
) -> Result<Prediction> {
    let (feature, decoder) = split_forward(spec, params, x)?;
    let received = link.transmit(&feature)?;
    decoder.resume(&received)
}

/// `min(-ln p[label], clip)`.
pub fn clipped_cross_entropy(pred: &Prediction, label: usize, clip: f64) -> Result<f64> {
    if label >= pred.logits.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            pred.logits.len()
        )));
    }
    if !(clip > 0.0) {
        return Err(Error::input("clip must be positive"));
    }
    Ok(pred.neg_log_likelihood(label).clamp(0.0, clip))
}

#[derive(Clone, Debug)]
pub struct LossGradient {
    pub loss: f64,
    pub prediction: Prediction,
    pub gradient: Vec<f64>,
}

/// Clipped loss of one sample and its gradient with respect to every parameter.
///
/// The gradient is exactly zero once the loss reaches the clip.
pub fn gradient<L: FeatureLink + ?Sized>(
    spec: &NetworkSpec,
    params: &ParameterVector,
    x: &[f64],
    label: usize,
    link: &mut L,
    clip: f64,
) -> Result<LossGradient> {
    check_inputs(spec, params, x)?;
    let n_layers = spec.num_layers();
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut act = x.to_vec();
    for layer in 0..n_layers {
        if layer == spec.split_index {
            act = link.transmit(&act)?;
            if act.len() != spec.feature_width() {
                return Err(Error::config("link changed the feature width"));
            }
        }
        let (pre, out) = dense(spec, params, layer, &act);
        inputs.push(act);
        pres.push(pre);
        act = out;
    }
    if spec.split_index == n_layers {
        act = link.transmit(&act)?;
    }
    let prediction = Prediction::from_logits(act);
    let loss = clipped_cross_entropy(&prediction, label, clip)?;
    let mut grad = vec![0.0; spec.param_count()];
    if prediction.neg_log_likelihood(label) >= clip {
        return Ok(LossGradient {
            loss,
            prediction,
            gradient: grad,
        });
    }

    let mut delta: Vec<f64> = prediction.probabilities.clone();
    delta[label] -= 1.0;
    for layer in (0..n_layers).rev() {
        let act_fn = spec.activation(layer);
        let dz: Vec<f64> = delta
            .iter()
            .zip(&pres[layer])
            .map(|(d, &z)| d * act_fn.derivative(z))
            .collect();
        let input = &inputs[layer];
        let cols = input.len();
        let start = spec.layer_offset(layer);
        let (gw, rest) = grad[start..].split_at_mut(dz.len() * cols);
        for (r, &d) in dz.iter().enumerate() {
            for (g, &a) in gw[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                *g = d * a;
            }
            rest[r] = d;
        }
        if layer > 0 {
            let (weights, _) = params.layer(spec, layer);
            delta = (0..cols)
                .map(|c| dz.iter().enumerate().map(|(r, &d)| weights[r * cols + c] * d).sum())
                .collect();
        }
    }
    Ok(LossGradient {
        loss,
        prediction,
        gradient: grad,
    })
}
