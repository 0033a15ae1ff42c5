//! Seeded synthetic two-class datasets in the plane.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "blobs2")]
    Blobs2,
    #[serde(rename = "moons")]
    Moons,
    #[serde(rename = "xor-rings")]
    XorRings,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs2" => Ok(Generator::Blobs2),
            "moons" => Ok(Generator::Moons),
            "xor-rings" => Ok(Generator::XorRings),
            other => Err(Error::config(format!("unknown dataset generator {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Centers of the two `blobs2` clusters.
pub const BLOB_CENTERS: [[f64; 2]; 2] = [[-1.5, 0.0], [1.5, 0.0]];

/// Generates `n` samples (`n / 2` of class 0, the rest class 1), shuffles
/// them, and splits off the first `floor(4n/5)` for training.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n < 10 {
        return Err(Error::config(format!("dataset needs at least 10 samples, got {}", spec.n)));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::config(format!("noise must be finite and non-negative, got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.noise).expect("validated noise");
    let class_sizes = [spec.n / 2, spec.n - spec.n / 2];
    let mut samples = Vec::with_capacity(spec.n);
    for (label, &count) in class_sizes.iter().enumerate() {
        for _ in 0..count {
            let base = match spec.generator {
                Generator::Blobs2 => BLOB_CENTERS[label],
                Generator::Moons => moon_point(label, &mut rng),
                Generator::XorRings => xor_ring_point(label, &mut rng),
            };
            let x = vec![base[0] + jitter.sample(&mut rng), base[1] + jitter.sample(&mut rng)];
            samples.push(Sample { x, label });
        }
    }
    samples.shuffle(&mut rng);
    let test = samples.split_off(spec.n * 4 / 5);
    Ok(Dataset {
        train: samples,
        test,
    })
}

fn moon_point<R: Rng>(label: usize, rng: &mut R) -> [f64; 2] {
    let t = rng.random_range(0.0..std::f64::consts::PI);
    if label == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

/// Label is (same-sign quadrant) XOR (outside radius 1.25); points are drawn by rejection.
fn xor_ring_point<R: Rng>(label: usize, rng: &mut R) -> [f64; 2] {
    loop {
        let r = rng.random_range(0.5..2.0);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let p = [r * a.cos(), r * a.sin()];
        let quadrant = p[0] * p[1] > 0.0;
        let outer = r > 1.25;
        if usize::from(quadrant ^ outer) == label {
            return p;
        }
    }
}
