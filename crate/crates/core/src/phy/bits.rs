use num_complex::Complex64;

use super::{ChannelState, Constellation, Scheme};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BitVector(pub Vec<u8>);

impl BitVector {
    pub fn new(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// Modulated symbols plus the unpadded bit length.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub symbols: Vec<Complex64>,
    pub bit_len: usize,
}

impl Frame {
    pub fn pad_bits(&self, scheme: Scheme) -> usize {
        self.symbols.len() * scheme.bits_per_symbol() - self.bit_len
    }
}

/// Zero-pads to a symbol boundary and maps each bit group to its Gray-labelled point.
pub fn modulate(bits: &BitVector, constellation: &Constellation) -> Frame {
    let k = constellation.bits_per_symbol();
    let symbols = bits
        .0
        .chunks(k)
        .map(|chunk| {
            let label = (0..k).fold(0usize, |acc, j| (acc << 1) | usize::from(*chunk.get(j).unwrap_or(&0)));
            constellation.map(label)
        })
        .collect();
    Frame {
        symbols,
        bit_len: bits.len(),
    }
}

/// Coherent detection with perfect CSI: equalize by `h`, slice, unmap, strip padding.
pub fn demodulate(
    received: &[Complex64],
    state: &ChannelState,
    constellation: &Constellation,
    bit_len: usize,
) -> Result<BitVector> {
    if state.fading.norm_sqr() == 0.0 {
        return Err(Error::ChannelSingular);
    }
    let k = constellation.bits_per_symbol();
    if bit_len > received.len() * k {
        return Err(Error::input("bit length exceeds received symbol capacity"));
    }
    let mut bits = Vec::with_capacity(received.len() * k);
    for &y in received {
        let label = constellation.slice(y / state.fading);
        bits.extend((0..k).rev().map(|j| ((label >> j) & 1) as u8));
    }
    bits.truncate(bit_len);
    Ok(BitVector(bits))
}

pub fn count_bit_errors(sent: &BitVector, received: &BitVector) -> Result<usize> {
    if sent.len() != received.len() {
        return Err(Error::input(format!(
            "bit vectors differ in length: {} vs {}",
            sent.len(),
            received.len()
        )));
    }
    Ok(sent.0.iter().zip(&received.0).filter(|(a, b)| a != b).count())
}

/// Hamming distance over length.
pub fn measure_ber(sent: &BitVector, received: &BitVector) -> Result<f64> {
    let errors = count_bit_errors(sent, received)?;
    if sent.is_empty() {
        return Ok(0.0);
    }
    Ok(errors as f64 / sent.len() as f64)
}
