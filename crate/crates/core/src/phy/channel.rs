//! Quasi-static AWGN and Rayleigh channels with per-symbol SNR under unit signal energy.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "AWGN",
            ChannelKind::Rayleigh => "Rayleigh",
        }
    }
}

/// Channel distribution: everything about a link except the fading draw.
///
/// `snr_db = inf` describes a noiseless link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub scheme: Scheme,
}

impl ChannelConfig {
    pub fn new(kind: ChannelKind, snr_db: f64, scheme: Scheme) -> Self {
        Self {
            kind,
            snr_db,
            scheme,
        }
    }

    pub fn noiseless(kind: ChannelKind, scheme: Scheme) -> Self {
        Self::new(kind, f64::INFINITY, scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config(format!("invalid SNR {} dB", self.snr_db)));
        }
        Ok(())
    }

    /// Complex noise variance per symbol, `10^(-snr/10)`.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    /// One quasi-static realization.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelState {
        let fading = match self.kind {
            ChannelKind::Awgn => Complex64::new(1.0, 0.0),
            ChannelKind::Rayleigh => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            }
        };
        ChannelState {
            kind: self.kind,
            fading,
            snr_db: self.snr_db,
            noise_variance: self.noise_variance(),
            scheme: self.scheme,
        }
    }

    pub fn label(&self) -> String {
        if self.snr_db.is_infinite() {
            format!("{} (noiseless,{})", self.kind.name(), self.scheme)
        } else {
            format!("{} ({}dB,{})", self.kind.name(), self.snr_db, self.scheme)
        }
    }
}

/// One channel realization, held fixed for the transmission of a data sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelState {
    pub kind: ChannelKind,
    pub fading: Complex64,
    pub snr_db: f64,
    pub noise_variance: f64,
    pub scheme: Scheme,
}

impl ChannelState {
    /// Modulation-only links carry exactly the constellation's bits per symbol.
    pub fn rate_bits_per_symbol(&self) -> f64 {
        self.scheme.bits_per_symbol() as f64
    }

    /// Draws `n ~ CN(0, noise_variance)`.
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        if self.noise_variance == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s = (self.noise_variance / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    }
}

/// `y_i = h x_i + n_i` with `h` shared across the whole sequence.
pub fn apply_channel<R: Rng + ?Sized>(
    symbols: &[Complex64],
    state: &ChannelState,
    rng: &mut R,
) -> Vec<Complex64> {
    symbols
        .iter()
        .map(|&x| state.fading * x + state.noise(rng))
        .collect()
}
