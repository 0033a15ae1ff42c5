use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_channel, count_bit_errors, demodulate, dequantize, modulate, quantize_features,
    ChannelConfig, ChannelState, Constellation,
};
use crate::error::{Error, Result};
use crate::nn::FeatureLink;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    /// 1-bit quantization, modulation, channel, coherent demodulation, dequantization.
    #[default]
    Digital,
    /// Unquantized amplitudes: each element receives the equalized real noise
    /// `Re(n/h)` scaled to the feature's RMS amplitude.
    Analog,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub transmissions: usize,
    pub bits_sent: usize,
    pub bit_errors: usize,
}

impl LinkStats {
    pub fn ber(&self) -> f64 {
        if self.bits_sent == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_sent as f64
        }
    }
}

/// Device-to-base-station feature link. Each call to `transmit` is one data
/// sample and gets its own fading draw.
#[derive(Clone, Debug)]
pub struct WirelessLink<R> {
    config: ChannelConfig,
    constellation: Constellation,
    mode: LinkMode,
    rng: R,
    stats: LinkStats,
    last_state: Option<ChannelState>,
}

impl<R: Rng> WirelessLink<R> {
    pub fn new(config: ChannelConfig, mode: LinkMode, rng: R) -> Self {
        Self {
            constellation: config.scheme.constellation(),
            config,
            mode,
            rng,
            stats: LinkStats::default(),
            last_state: None,
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn last_state(&self) -> Option<&ChannelState> {
        self.last_state.as_ref()
    }

    fn digital(&mut self, feature: &[f64], state: &ChannelState) -> Result<Vec<f64>> {
        let q = quantize_features(feature)?;
        let frame = modulate(&q.bits, &self.constellation);
        let rx = apply_channel(&frame.symbols, state, &mut self.rng);
        let bits = demodulate(&rx, state, &self.constellation, frame.bit_len)?;
        self.stats.bits_sent += q.bits.len();
        self.stats.bit_errors += count_bit_errors(&q.bits, &bits)?;
        Ok(dequantize(&bits, q.scale))
    }

    fn analog(&mut self, feature: &[f64], state: &ChannelState) -> Result<Vec<f64>> {
        if state.fading.norm_sqr() == 0.0 {
            return Err(Error::ChannelSingular);
        }
        let rms = (feature.iter().map(|v| v * v).sum::<f64>() / feature.len() as f64).sqrt();
        Ok(feature
            .iter()
            .map(|&v| v + (state.noise(&mut self.rng) / state.fading).re * rms)
            .collect())
    }
}

impl<R: Rng> FeatureLink for WirelessLink<R> {
    fn transmit(&mut self, feature: &[f64]) -> Result<Vec<f64>> {
        let state = self.config.draw(&mut self.rng);
        let out = match self.mode {
            LinkMode::Digital => self.digital(feature, &state)?,
            LinkMode::Analog => self.analog(feature, &state)?,
        };
        self.stats.transmissions += 1;
        self.last_state = Some(state);
        Ok(out)
    }
}
