//! Gray-labelled BPSK and rectangular QAM constellations at unit average energy.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8QAM")]
    Qam8,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "32QAM")]
    Qam32,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "256QAM")]
    Qam256,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Bpsk,
        Scheme::Qpsk,
        Scheme::Qam8,
        Scheme::Qam16,
        Scheme::Qam32,
        Scheme::Qam64,
        Scheme::Qam256,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Scheme::Bpsk => 1,
            Scheme::Qpsk => 2,
            Scheme::Qam8 => 3,
            Scheme::Qam16 => 4,
            Scheme::Qam32 => 5,
            Scheme::Qam64 => 6,
            Scheme::Qam256 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bpsk => "BPSK",
            Scheme::Qpsk => "QPSK",
            Scheme::Qam8 => "8QAM",
            Scheme::Qam16 => "16QAM",
            Scheme::Qam32 => "32QAM",
            Scheme::Qam64 => "64QAM",
            Scheme::Qam256 => "256QAM",
        }
    }

    pub fn from_bits_per_symbol(bits: usize) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|s| s.bits_per_symbol() == bits)
            .ok_or_else(|| Error::config(format!("no modulation carries {bits} bits per symbol")))
    }

    pub fn constellation(self) -> Constellation {
        Constellation::new(self)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown modulation scheme {s:?}")))
    }
}

#[inline]
fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

#[inline]
fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Points indexed by their bit label (most significant bit first in the bit stream).
///
/// Rectangular schemes put `ceil(k/2)` bits on the in-phase axis and
/// `floor(k/2)` on quadrature; each axis is a Gray-coded PAM ladder, so
/// grid neighbours differ in exactly one bit.
#[derive(Clone, Debug)]
pub struct Constellation {
    pub scheme: Scheme,
    pub points: Vec<Complex64>,
    i_bits: usize,
    q_bits: usize,
    scale: f64,
}

impl Constellation {
    pub fn new(scheme: Scheme) -> Self {
        if scheme == Scheme::Bpsk {
            return Self {
                scheme,
                points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
                i_bits: 1,
                q_bits: 0,
                scale: 1.0,
            };
        }
        let k = scheme.bits_per_symbol();
        let i_bits = k.div_ceil(2);
        let q_bits = k / 2;
        let (li, lq) = (1usize << i_bits, 1usize << q_bits);
        let energy = ((li * li - 1) + (lq * lq - 1)) as f64 / 3.0;
        let scale = energy.sqrt();
        let mut points = vec![Complex64::new(0.0, 0.0); 1 << k];
        for i_idx in 0..li {
            for q_idx in 0..lq {
                let label = (gray(i_idx) << q_bits) | gray(q_idx);
                points[label] = Complex64::new(
                    pam_level(i_idx, li) / scale,
                    pam_level(q_idx, lq) / scale,
                );
            }
        }
        Self {
            scheme,
            points,
            i_bits,
            q_bits,
            scale,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.scheme.bits_per_symbol()
    }

    pub fn map(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Nearest-point decision by per-axis slicing.
    pub fn slice(&self, y: Complex64) -> usize {
        if self.scheme == Scheme::Bpsk {
            return usize::from(y.re < 0.0);
        }
        let (li, lq) = (1usize << self.i_bits, 1usize << self.q_bits);
        let i_idx = nearest_level(y.re * self.scale, li);
        let q_idx = nearest_level(y.im * self.scale, lq);
        (gray(i_idx) << self.q_bits) | gray(q_idx)
    }

    /// Grid coordinates of a label; BPSK sits on a 2x1 grid.
    pub fn grid_position(&self, label: usize) -> (usize, usize) {
        if self.scheme == Scheme::Bpsk {
            return (1 - label, 0);
        }
        let q_mask = (1usize << self.q_bits) - 1;
        (gray_inverse(label >> self.q_bits), gray_inverse(label & q_mask))
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, pa) in self.points.iter().enumerate() {
            for pb in &self.points[a + 1..] {
                best = best.min((pa - pb).norm());
            }
        }
        best
    }
}

/// Odd-integer ladder `-(L-1), ..., -1, 1, ..., L-1`.
#[inline]
fn pam_level(idx: usize, levels: usize) -> f64 {
    (2 * idx) as f64 - (levels - 1) as f64
}

#[inline]
fn nearest_level(v: f64, levels: usize) -> usize {
    let idx = ((v + (levels - 1) as f64) / 2.0).round();
    idx.clamp(0.0, (levels - 1) as f64) as usize
}
