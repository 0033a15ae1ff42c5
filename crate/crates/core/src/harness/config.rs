use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::outage::OutageMode;
use crate::phy::{ChannelConfig, ChannelKind, LinkMode, Scheme};
use crate::trainer::{Method, TrainConfig};

/// Environment variable that overrides `master_seed`.
pub const SEED_ENV: &str = "WDL_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundTable,
    RateSweep,
    TrainCompare,
    Ber,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::BoundTable => "bound-table",
            ExperimentKind::RateSweep => "rate-sweep",
            ExperimentKind::TrainCompare => "train-compare",
            ExperimentKind::Ber => "ber",
        })
    }
}

/// Modulation schemes evaluated at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateGrid {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub schemes: Vec<Scheme>,
    /// Channel used for wireless fine-tuning before the sweep.
    pub train_channel: ChannelConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    #[serde(default = "CompareSettings::default_replicates")]
    pub replicates: usize,
    /// Final models are evaluated on this grid.
    pub evaluation: RateGrid,
}

impl CompareSettings {
    fn default_replicates() -> usize {
        1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSweep {
    pub kind: ChannelKind,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub bits_per_point: usize,
    /// Bits per quasi-static fading block.
    #[serde(default = "BerSweep::default_frame_bits")]
    pub frame_bits: usize,
}

impl BerSweep {
    fn default_frame_bits() -> usize {
        960
    }
}

/// One experiment, fully specified. Unused sections may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    #[serde(default = "ExperimentConfig::default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub outage_mode: OutageMode,
    #[serde(default)]
    pub link_mode: LinkMode,
    #[serde(default = "ExperimentConfig::default_method")]
    pub finetune_method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_grid: Option<RateGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<BerSweep>,
}

fn require<'a, T>(section: &'a Option<T>, name: &str, kind: ExperimentKind) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::config(format!("{kind} experiment needs a [{name}] section")))
}

impl ExperimentConfig {
    fn default_draws() -> usize {
        20
    }

    fn default_method() -> Method {
        Method::Vanilla
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and applies the `WDL_SEED` override, if set.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            config.master_seed = seed
                .trim()
                .parse()
                .map_err(|e| Error::config(format!("{SEED_ENV}={seed:?} is not a u64: {e}")))?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        if self.draws == 0 {
            return Err(Error::config("draws must be at least 1"));
        }
        let needs_model = kind != ExperimentKind::Ber;
        if needs_model {
            require(&self.network, "network", kind)?.validate()?;
            let dataset = require(&self.dataset, "dataset", kind)?;
            if dataset.n < 10 {
                return Err(Error::config("dataset needs at least 10 samples"));
            }
            require(&self.pretrain, "pretrain", kind)?.validate()?;
            require(&self.finetune, "finetune", kind)?.validate()?;
        }
        match kind {
            ExperimentKind::BoundTable => {
                if self.channels.is_empty() {
                    return Err(Error::config("bound-table needs at least one [[channels]] cell"));
                }
                for c in &self.channels {
                    c.validate()?;
                }
            }
            ExperimentKind::RateSweep => validate_grid(require(&self.rate_grid, "rate_grid", kind)?)?,
            ExperimentKind::TrainCompare => {
                let compare = require(&self.compare, "compare", kind)?;
                if compare.replicates == 0 {
                    return Err(Error::config("replicates must be at least 1"));
                }
                validate_grid(&compare.evaluation)?;
            }
            ExperimentKind::Ber => {
                let ber = require(&self.ber, "ber", kind)?;
                if ber.schemes.is_empty() || ber.snr_db.is_empty() {
                    return Err(Error::config("BER sweep needs schemes and SNR points"));
                }
                if ber.bits_per_point == 0 || ber.frame_bits == 0 {
                    return Err(Error::config("BER sweep needs positive bit counts"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn validate_grid(grid: &RateGrid) -> Result<()> {
    if grid.schemes.is_empty() {
        return Err(Error::config("rate grid needs at least one scheme"));
    }
    grid.train_channel.validate()?;
    ChannelConfig::new(grid.kind, grid.snr_db, Scheme::Bpsk).validate()
}

/// Per-cell seed: SplitMix64 over the master seed, an FNV-1a hash of `tag`, and `index`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut tag_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        tag_hash ^= u64::from(b);
        tag_hash = tag_hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ tag_hash.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
