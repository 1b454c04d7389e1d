//! Synthetic accuracy: a saturating function of subnet capacity plus small
//! bonuses for attention and GELU, and a deterministic per-architecture
//! noise term.

use crate::predictor::AccuracyModel;
use crate::subnet::{Activation, BlockKind, SubnetArch};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyOracle {
    pub base: f64,
    /// Ceiling of the capacity term.
    pub scale: f64,
    /// Saturation rate of the capacity term.
    pub rate: f64,
    /// Gain per attention block at the smallest value expansion.
    pub mhsa_gain: f64,
    /// Gain per block running GELU.
    pub gelu_gain: f64,
    /// Gain per unit of value expansion of the downsampling attention.
    pub downsample_gain: f64,
    /// Half-width of the uniform noise term.
    pub noise: f64,
    pub seed: u64,
}

impl Default for AccuracyOracle {
    fn default() -> Self {
        AccuracyOracle {
            base: 0.514,
            scale: 0.27,
            rate: 0.05,
            mhsa_gain: 0.0015,
            gelu_gain: 0.0003,
            downsample_gain: 0.001,
            noise: 0.0005,
            seed: 0,
        }
    }
}

impl AccuracyOracle {
    pub fn with_seed(seed: u64) -> Self {
        AccuracyOracle {
            seed,
            ..AccuracyOracle::default()
        }
    }

    /// Noise-free accuracy.
    pub fn clean(&self, arch: &SubnetArch) -> f64 {
        let f = features(arch);
        self.base
            + self.scale * (1.0 - (-self.rate * f.capacity).exp())
            + self.mhsa_gain * f.attention
            + self.gelu_gain * f.gelu as f64
            + self.downsample_gain * f.downsample
    }

    /// Deterministic noise in `[-noise, noise)`, keyed on the block list and
    /// the oracle seed.
    pub fn noise_of(&self, arch: &SubnetArch) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(&arch.blocks).expect("blocks serialize"));
        h.update(arch.input_resolution.to_le_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let u = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
        self.noise * (2.0 * u - 1.0)
    }

    pub fn accuracy(&self, arch: &SubnetArch) -> f64 {
        (self.clean(arch) + self.noise_of(arch)).clamp(0.0, 1.0)
    }
}

impl AccuracyModel for AccuracyOracle {
    fn predict(&self, arch: &SubnetArch) -> f64 {
        self.accuracy(arch)
    }
}

pub fn synthetic_accuracy(arch: &SubnetArch, oracle: &AccuracyOracle) -> f64 {
    oracle.accuracy(arch)
}

struct Features {
    capacity: f64,
    attention: f64,
    gelu: usize,
    downsample: f64,
}

fn features(arch: &SubnetArch) -> Features {
    let mut f = Features {
        capacity: 0.0,
        attention: 0.0,
        gelu: 0,
        downsample: 0.0,
    };
    for b in &arch.blocks {
        let e = f64::from(b.expansion.unwrap_or(2));
        match b.kind {
            BlockKind::UnifiedFfn | BlockKind::FusedFfn => {
                let mut c = f64::from(b.in_width) / 100.0 * (1.0 + 0.15 * (e - 2.0));
                if b.kernel == Some(5) {
                    c *= 1.08;
                }
                if b.kind == BlockKind::FusedFfn {
                    c *= 1.05;
                }
                f.capacity += c;
            }
            BlockKind::Mhsa => f.attention += 1.0 + 0.1 * (e - 2.0),
            BlockKind::MhsaDownsample => f.downsample += e - 1.0,
            _ => {}
        }
        if b.activation == Some(Activation::Gelu) {
            f.gelu += 1;
        }
    }
    f
}
