use rand::Rng;

use super::BitVector;
use crate::error::{Error, Result};
use crate::nn::FeatureLink;

/// One-bit code of a feature vector plus the L2 norm the receiver needs to rescale it.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedFeature {
    pub bits: BitVector,
    pub scale: f64,
}

/// Sign bits of the L2-normalized feature (`1` for `>= 0`).
///
/// A zero vector maps to all-ones with scale 0.
pub fn quantize_features(feature: &[f64]) -> Result<QuantizedFeature> {
    if feature.is_empty() {
        return Err(Error::input("cannot quantize an empty feature"));
    }
    let scale = feature.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bits = if scale == 0.0 {
        vec![1; feature.len()]
    } else {
        feature.iter().map(|&v| u8::from(v / scale >= 0.0)).collect()
    };
    Ok(QuantizedFeature {
        bits: BitVector(bits),
        scale,
    })
}

/// Bit `b` maps to `scale * (2b - 1) / sqrt(dim)`.
pub fn dequantize(bits: &BitVector, scale: f64) -> Vec<f64> {
    let amplitude = scale / (bits.len() as f64).sqrt();
    bits.0
        .iter()
        .map(|&b| if b == 1 { amplitude } else { -amplitude })
        .collect()
}

/// `feature + u` with `u ~ U[-step/2, step/2]` i.i.d.; differentiated as the identity.
pub fn surrogate_quantize<R: Rng + ?Sized>(feature: &[f64], step: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(step >= 0.0) || !step.is_finite() {
        return Err(Error::input(format!("quantization step must be finite and non-negative, got {step}")));
    }
    if step == 0.0 {
        return Ok(feature.to_vec());
    }
    let half = step / 2.0;
    Ok(feature
        .iter()
        .map(|&v| v + rng.random_range(-half..=half))
        .collect())
}

/// Training-time stand-in for the quantizer.
#[derive(Clone, Debug)]
pub struct SurrogateLink<R> {
    pub step: f64,
    pub rng: R,
}

impl<R: Rng> FeatureLink for SurrogateLink<R> {
    fn transmit(&mut self, feature: &[f64]) -> Result<Vec<f64>> {
        surrogate_quantize(feature, self.step, &mut self.rng)
    }
}
