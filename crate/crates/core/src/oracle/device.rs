//! Synthetic devices: an analytic per-block latency model whose
//! coefficients mimic the qualitative behavior of CPU-, GPU- and VPU-class
//! edge hardware.

use crate::latency::{DeviceInfo, Measurement};
use crate::space::{lut_keys, SearchSpace};
use crate::subnet::{block_cost, Activation, AttentionShape, BlockKey, LayerKind, SubnetArch};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Cost coefficients of one synthetic device. All values are non-negative;
/// a profile of zeros costs nothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    /// Milliseconds per multiply-accumulate of pointwise and linear layers.
    pub mac_ms: f64,
    /// MAC cost multiplier of dense KxK convolutions.
    pub dense_conv_factor: f64,
    /// MAC cost multiplier of depthwise convolutions.
    pub depthwise_factor: f64,
    /// Milliseconds per byte of weights and feature maps moved.
    pub byte_ms: f64,
    pub bytes_per_elem: f64,
    /// Fixed launch cost per layer.
    pub op_overhead_ms: f64,
    /// Milliseconds per element passed through a ReLU.
    pub activation_ms: f64,
    /// GELU cost relative to ReLU.
    pub gelu_penalty: f64,
    pub softmax_ms: f64,
    /// Multiplier on every cost term of self-attention computations.
    pub attention_factor: f64,
}

impl DeviceProfile {
    pub fn zero(name: &str) -> Self {
        DeviceProfile {
            name: name.to_string(),
            mac_ms: 0.0,
            dense_conv_factor: 0.0,
            depthwise_factor: 0.0,
            byte_ms: 0.0,
            bytes_per_elem: 0.0,
            op_overhead_ms: 0.0,
            activation_ms: 0.0,
            gelu_penalty: 0.0,
            softmax_ms: 0.0,
            attention_factor: 0.0,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let fields = [
            ("mac_ms", self.mac_ms),
            ("dense_conv_factor", self.dense_conv_factor),
            ("depthwise_factor", self.depthwise_factor),
            ("byte_ms", self.byte_ms),
            ("bytes_per_elem", self.bytes_per_elem),
            ("op_overhead_ms", self.op_overhead_ms),
            ("activation_ms", self.activation_ms),
            ("gelu_penalty", self.gelu_penalty),
            ("softmax_ms", self.softmax_ms),
            ("attention_factor", self.attention_factor),
        ];
        match fields.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            Some((name, v)) => Err(format!("profile `{}`: {name} = {v}", self.name)),
            None => Ok(()),
        }
    }

    /// Same device with the attention cost scaled by `factor`.
    pub fn with_attention_factor(&self, name: &str, factor: f64) -> Self {
        DeviceProfile {
            name: name.to_string(),
            attention_factor: factor,
            ..self.clone()
        }
    }
}

/// Latency of one block on a synthetic device (ms).
pub fn synthetic_block_latency(key: &BlockKey, profile: &DeviceProfile) -> f64 {
    let cost = block_cost(key, AttentionShape::default());
    let p = profile;
    let mut plain = 0.0;
    let mut attention = 0.0;
    for layer in &cost.layers {
        let factor = match layer.kind {
            LayerKind::DenseConv => p.dense_conv_factor,
            LayerKind::Depthwise => p.depthwise_factor,
            LayerKind::Pointwise | LayerKind::Linear | LayerKind::AttentionMatmul => 1.0,
        };
        let bytes =
            (layer.params + layer.input_elems + layer.output_elems) as f64 * p.bytes_per_elem;
        let ms = p.mac_ms * factor * layer.macs as f64 + p.byte_ms * bytes + p.op_overhead_ms;
        if layer.attention {
            attention += ms;
        } else {
            plain += ms;
        }
    }
    let act = match key.activation {
        Some(Activation::Gelu) => p.activation_ms * p.gelu_penalty,
        Some(Activation::Relu) => p.activation_ms,
        None => 0.0,
    };
    let has_attention = cost.layers.iter().any(|l| l.attention);
    let act_ms = act * cost.activation_elems as f64;
    if has_attention {
        attention += act_ms + p.softmax_ms * cost.softmax_elems as f64;
    } else {
        plain += act_ms;
    }
    plain + p.attention_factor * attention
}

/// Noise-free end-to-end latency: the sum of the block latencies.
pub fn synthetic_latency(arch: &SubnetArch, profile: &DeviceProfile) -> f64 {
    arch.blocks
        .iter()
        .map(|b| synthetic_block_latency(&b.key(), profile))
        .sum()
}

/// CPU-, GPU- and VPU-class profiles. Each reproduces the relative order of
/// the five reference network variants measured on its device class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardProfiles {
    pub cpu_like: DeviceProfile,
    pub gpu_like: DeviceProfile,
    pub vpu_like: DeviceProfile,
}

impl StandardProfiles {
    pub fn all(&self) -> [&DeviceProfile; 3] {
        [&self.cpu_like, &self.gpu_like, &self.vpu_like]
    }

    pub fn get(&self, name: &str) -> Option<&DeviceProfile> {
        self.all().into_iter().find(|p| p.name == name)
    }
}

pub fn make_standard_profiles() -> StandardProfiles {
    StandardProfiles {
        // Arithmetic bound; GELU is very expensive, depthwise is cheap.
        cpu_like: DeviceProfile {
            name: "cpu_like".into(),
            mac_ms: 1.9e-7,
            dense_conv_factor: 0.6,
            depthwise_factor: 1.05,
            byte_ms: 2.55e-8,
            bytes_per_elem: 4.0,
            op_overhead_ms: 0.05,
            activation_ms: 1.7e-6,
            gelu_penalty: 14.0,
            softmax_ms: 1.0e-6,
            attention_factor: 1.6,
        },
        // Fast dense arithmetic, attention is the bottleneck.
        gpu_like: DeviceProfile {
            name: "gpu_like".into(),
            mac_ms: 1.1e-9,
            dense_conv_factor: 4.5,
            depthwise_factor: 1.0,
            byte_ms: 3.3e-9,
            bytes_per_elem: 2.0,
            op_overhead_ms: 0.01,
            activation_ms: 9.4e-8,
            gelu_penalty: 3.8,
            softmax_ms: 7.8e-8,
            attention_factor: 30.0,
        },
        // Dense convolutions are well supported, depthwise ones are not.
        vpu_like: DeviceProfile {
            name: "vpu_like".into(),
            mac_ms: 2.3e-8,
            dense_conv_factor: 0.25,
            depthwise_factor: 12.0,
            byte_ms: 5.0e-9,
            bytes_per_elem: 2.0,
            op_overhead_ms: 0.047,
            activation_ms: 1.36e-6,
            gelu_penalty: 3.8,
            softmax_ms: 9.4e-7,
            attention_factor: 2.5,
        },
    }
}

/// A device whose end-to-end latency is a noisy linear function of the block
/// sum, so that calibration has known ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub profile: DeviceProfile,
    pub kappa: f64,
    pub epsilon: f64,
    /// Standard deviation of the end-to-end noise, relative to the
    /// noise-free latency.
    pub noise_rel: f64,
}

impl SyntheticDevice {
    pub fn noiseless(&self, arch: &SubnetArch) -> f64 {
        self.kappa * synthetic_latency(arch, &self.profile) + self.epsilon
    }

    /// One end-to-end measurement.
    pub fn measure<R: Rng + ?Sized>(&self, arch: &SubnetArch, rng: &mut R) -> f64 {
        let clean = self.noiseless(arch);
        if self.noise_rel == 0.0 {
            return clean;
        }
        let n = Normal::new(0.0, self.noise_rel * clean).expect("finite sigma");
        clean + n.sample(rng)
    }
}

/// Block-level measurements for every key of `space`: `repeats` per key
/// with multiplicative Gaussian jitter of relative size `jitter`.
pub fn generate_lut_measurements<R: Rng + ?Sized>(
    space: &SearchSpace,
    profile: &DeviceProfile,
    repeats: usize,
    jitter: f64,
    rng: &mut R,
) -> Vec<Measurement> {
    let mut out = Vec::with_capacity(repeats * 600);
    for key in lut_keys(space) {
        let clean = synthetic_block_latency(&key, profile);
        for _ in 0..repeats.max(1) {
            let ms = if jitter > 0.0 {
                let n = Normal::new(1.0, jitter).expect("finite sigma");
                clean * n.sample(rng).max(0.5)
            } else {
                clean
            };
            out.push(Measurement {
                key,
                latency_ms: ms.max(f64::MIN_POSITIVE),
            });
        }
    }
    out
}

pub fn device_info(profile: &DeviceProfile) -> DeviceInfo {
    DeviceInfo {
        device: profile.name.clone(),
        compiler: "synthetic".into(),
        precision: "fp32".into(),
    }
}
