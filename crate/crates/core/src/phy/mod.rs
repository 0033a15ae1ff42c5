//! Physical layer: feature quantization, Gray-mapped modulation, quasi-static
//! fading channels, coherent demodulation and capacity.
//!
//! SNR is per symbol with unit average symbol energy, so the complex noise
//! variance is `10^(-snr_db/10)` and `Eb/N0 = SNR / bits_per_symbol`.

mod bits;
mod channel;
mod link;
mod modulation;
mod quantize;

pub use bits::{count_bit_errors, demodulate, measure_ber, modulate, BitVector, Frame};
pub use channel::{apply_channel, ChannelConfig, ChannelKind, ChannelState};
pub use link::{LinkMode, LinkStats, WirelessLink};
pub use modulation::{Constellation, Scheme};
pub use quantize::{
    dequantize, quantize_features, surrogate_quantize, QuantizedFeature, SurrogateLink,
};

use statrs::function::erf::erfc;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `log2(1 + SNR)` bits per symbol.
pub fn shannon_capacity(snr_db: f64) -> f64 {
    (1.0 + db_to_linear(snr_db)).log2()
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Reference BER for Gray-mapped coherent detection.
///
/// Exact for BPSK and QPSK on AWGN; nearest-neighbour approximation for
/// larger rectangular constellations. Rayleigh values average the same
/// expression over `|h|^2 ~ Exp(1)`.
pub fn analytic_ber(scheme: Scheme, kind: ChannelKind, snr_db: f64) -> f64 {
    let snr = db_to_linear(snr_db);
    let (coefficient, gain) = if scheme == Scheme::Bpsk {
        (1.0, 2.0)
    } else {
        let k = scheme.bits_per_symbol();
        let (ki, kq) = (k.div_ceil(2), k / 2);
        let (li, lq) = ((1usize << ki) as f64, (1usize << kq) as f64);
        let energy = (li * li - 1.0 + lq * lq - 1.0) / 3.0;
        (2.0 * ((1.0 - 1.0 / li) + (1.0 - 1.0 / lq)) / k as f64, 2.0 / energy)
    };
    // Q(sqrt(gain * snr)) on AWGN.
    let c = gain * snr;
    match kind {
        ChannelKind::Awgn => coefficient * q_function(c.sqrt()),
        ChannelKind::Rayleigh => {
            let half = c / 2.0;
            coefficient * 0.5 * (1.0 - (half / (1.0 + half)).sqrt())
        }
    }
}
