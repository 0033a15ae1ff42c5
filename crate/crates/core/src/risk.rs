//! Standard and wireless empirical risks, their discrepancy, and the
//! information-theoretic upper bounds on it.
//!
//! With `I = I(W;S|Z)` and a `sigma`-sub-Gaussian loss, the expected
//! discrepancy is bounded by `sigma * sqrt(2 I)`; a sub-Gamma loss with scale
//! `c` adds `c * I`. Since `I(Z;S) = 0`, `I(W;S|Z)` equals `I(W,Z;S)`, which
//! is what the estimator in [`crate::mi`] targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nn::{forward_through, clipped_cross_entropy, CleanLink, FeatureLink, NetworkSpec, ParameterVector};
use crate::phy::{ChannelConfig, LinkMode, LinkStats, WirelessLink};

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Per-sample clipped losses and accuracy with features routed through `link`.
pub fn evaluate<L: FeatureLink + ?Sized>(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &[Sample],
    link: &mut L,
    clip: f64,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::input("cannot evaluate risk on an empty dataset"));
    }
    let mut losses = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    for sample in data {
        let pred = forward_through(spec, params, &sample.x, link)?;
        losses.push(clipped_cross_entropy(&pred, sample.label, clip)?);
        correct += usize::from(pred.predicted_class() == sample.label);
    }
    let mean_loss = losses.iter().sum::<f64>() / data.len() as f64;
    Ok(Evaluation {
        losses,
        mean_loss,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Mean clipped loss with no channel between encoder and decoder.
pub fn standard_risk(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &[Sample],
    clip: f64,
) -> Result<f64> {
    Ok(evaluate(spec, params, data, &mut CleanLink, clip)?.mean_loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WirelessEvaluation {
    pub evaluation: Evaluation,
    pub link: LinkStats,
}

/// Evaluation with every feature sent over its own quasi-static draw of `config`.
pub fn wireless_evaluation<R: Rng>(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &[Sample],
    config: &ChannelConfig,
    mode: LinkMode,
    clip: f64,
    rng: R,
) -> Result<WirelessEvaluation> {
    config.validate()?;
    let mut link = WirelessLink::new(*config, mode, rng);
    let evaluation = evaluate(spec, params, data, &mut link, clip)?;
    Ok(WirelessEvaluation {
        evaluation,
        link: link.stats(),
    })
}

pub fn wireless_risk<R: Rng>(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &[Sample],
    config: &ChannelConfig,
    mode: LinkMode,
    clip: f64,
    rng: R,
) -> Result<f64> {
    Ok(wireless_evaluation(spec, params, data, config, mode, clip, rng)?
        .evaluation
        .mean_loss)
}

/// Mean absolute gap between each channel draw's risk and the standard risk.
pub fn discrepancy(standard: f64, wireless: &[f64]) -> Result<f64> {
    if wireless.is_empty() {
        return Err(Error::input("discrepancy needs at least one channel draw"));
    }
    Ok(wireless.iter().map(|l| (l - standard).abs()).sum::<f64>() / wireless.len() as f64)
}

/// Mean signed gap `L(s) - L`, the quantity the sub-Gamma bound controls.
pub fn signed_discrepancy(standard: f64, wireless: &[f64]) -> Result<f64> {
    if wireless.is_empty() {
        return Err(Error::input("discrepancy needs at least one channel draw"));
    }
    Ok(wireless.iter().map(|l| l - standard).sum::<f64>() / wireless.len() as f64)
}

/// A loss bounded in `[0, b]` is `b/2`-sub-Gaussian (Hoeffding).
pub fn sigma_from_clip(clip: f64) -> Result<f64> {
    if !(clip >= 0.0) {
        return Err(Error::input(format!("clip must be non-negative, got {clip}")));
    }
    Ok(clip / 2.0)
}

/// `sigma * sqrt(2 I)`.
pub fn subgaussian_bound(sigma: f64, mi: f64) -> Result<f64> {
    if !(mi >= 0.0) {
        return Err(Error::input(format!("mutual information must be non-negative, got {mi}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::input(format!("sigma must be non-negative, got {sigma}")));
    }
    Ok(sigma * (2.0 * mi).sqrt())
}

/// `sigma * sqrt(2 I) + c * I`.
pub fn subgamma_bound(sigma: f64, scale: f64, mi: f64) -> Result<f64> {
    if !(scale >= 0.0) {
        return Err(Error::input(format!("sub-Gamma scale must be non-negative, got {scale}")));
    }
    Ok(subgaussian_bound(sigma, mi)? + scale * mi)
}

/// Bound-table record for one channel configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub standard_risk: f64,
    /// `(draw index, L(s))` in draw order.
    pub wireless_risks: Vec<(usize, f64)>,
    pub discrepancy: f64,
    pub signed_discrepancy: f64,
    pub sigma: f64,
    pub mi_estimate: f64,
    pub bound: f64,
    pub subgamma_bound: Option<f64>,
    pub accuracy: f64,
    pub ber: f64,
}

impl RiskReport {
    pub fn new(
        standard_risk: f64,
        wireless: &[f64],
        sigma: f64,
        mi_estimate: f64,
        subgamma_scale: Option<f64>,
        accuracy: f64,
        ber: f64,
    ) -> Result<Self> {
        Ok(Self {
            standard_risk,
            wireless_risks: wireless.iter().copied().enumerate().collect(),
            discrepancy: discrepancy(standard_risk, wireless)?,
            signed_discrepancy: signed_discrepancy(standard_risk, wireless)?,
            sigma,
            mi_estimate,
            bound: subgaussian_bound(sigma, mi_estimate)?,
            subgamma_bound: subgamma_scale
                .map(|c| subgamma_bound(sigma, c, mi_estimate))
                .transpose()?,
            accuracy,
            ber,
        })
    }

    pub fn bound_holds(&self) -> bool {
        self.discrepancy <= self.bound
    }
}
