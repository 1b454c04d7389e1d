#![allow(dead_code)]

use hwnas_core::evolution::{Constraint, ConstraintSet, LatencyEstimator, Metric};
use hwnas_core::oracle::{synthetic_estimator, DeviceProfile};
use hwnas_core::space::SearchSpace;

/// 81 920 subnets with attention in the last two stages.
pub const MEDIUM: &str = r#"{
  "stem": {"activations": ["relu"]},
  "stages": [
    {"widths": [24, 28, 4], "depths": [2], "ffn_types": ["fused", "unified"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [48, 48, 8], "depths": [2], "ffn_types": ["unified"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [96, 108, 12], "depths": [2, 3], "ffn_types": ["fused", "unified"], "expansions": [4], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [4], "mhsa_activations": ["relu"]},
    {"widths": [176, 200, 24], "depths": [2], "ffn_types": ["fused", "unified"], "expansions": [4], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [4], "mhsa_activations": ["relu"]}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "mhsa_downsample", "expansions": [2, 4], "activations": ["relu"]}]
}"#;

/// 576 subnets.
pub const TINY: &str = r#"{
  "stem": {"activations": ["relu"]},
  "stages": [
    {"widths": [24, 24, 4], "depths": [2], "ffn_types": ["fused"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [40, 48, 8], "depths": [2], "ffn_types": ["unified"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [96, 96, 12], "depths": [2], "ffn_types": ["unified"], "expansions": [2, 3, 4], "kernels": [3], "activations": ["relu"], "mhsa": false},
    {"widths": [176, 176, 24], "depths": [2], "ffn_types": ["fused", "unified"], "expansions": [4], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [2], "mhsa_activations": ["relu"]}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "mhsa_downsample", "expansions": [2, 4], "activations": ["relu"]}]
}"#;

/// Variable depths with a single block choice per slot.
pub const DEEP: &str = r#"{
  "stem": {"activations": ["gelu", "relu"]},
  "stages": [
    {"widths": [24, 24, 4], "depths": [1, 2, 3], "ffn_types": ["fused"], "expansions": [2], "kernels": [3], "activations": ["relu"]},
    {"widths": [40, 40, 8], "depths": [1, 2], "ffn_types": ["unified"], "expansions": [2], "kernels": [5], "activations": ["relu"]},
    {"widths": [96, 96, 12], "depths": [1, 2, 3, 4], "ffn_types": ["unified"], "expansions": [2], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [2], "mhsa_activations": ["relu"]},
    {"widths": [176, 176, 24], "depths": [1, 2, 3], "ffn_types": ["fused"], "expansions": [2], "kernels": [3], "activations": ["gelu"], "mhsa_expansions": [2], "mhsa_activations": ["gelu", "relu"]}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "conv"}]
}"#;

/// Every block dimension varies, depths fixed.
pub const WIDE: &str = r#"{
  "stem": {"activations": ["relu"]},
  "stages": [
    {"widths": [24, 36, 4], "depths": [1], "ffn_types": ["fused", "unified"], "expansions": [2, 3], "kernels": [3, 5], "activations": ["gelu", "relu"]},
    {"widths": [40, 40, 8], "depths": [1], "ffn_types": ["unified"], "expansions": [2], "kernels": [3], "activations": ["relu"]},
    {"widths": [96, 96, 12], "depths": [1], "ffn_types": ["fused"], "expansions": [3], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [2, 3, 4], "mhsa_activations": ["gelu", "relu"]},
    {"widths": [176, 200, 24], "depths": [1], "ffn_types": ["fused"], "expansions": [2], "kernels": [3], "activations": ["relu"], "mhsa": false}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "mhsa_downsample", "expansions": [2, 3, 4], "activations": ["gelu", "relu"]}]
}"#;

/// No attention anywhere.
pub const CONV_ONLY: &str = r#"{
  "stem": {"activations": ["gelu", "relu"]},
  "stages": [
    {"widths": [24, 28, 4], "depths": [2], "ffn_types": ["fused"], "expansions": [2], "kernels": [3], "activations": ["relu"]},
    {"widths": [40, 48, 8], "depths": [2], "ffn_types": ["fused"], "expansions": [2], "kernels": [3], "activations": ["relu"]},
    {"widths": [96, 96, 12], "depths": [2, 3], "ffn_types": ["fused", "unified"], "expansions": [2], "kernels": [3], "activations": ["relu"], "mhsa": false},
    {"widths": [176, 176, 24], "depths": [2], "ffn_types": ["unified"], "expansions": [2, 4], "kernels": [3], "activations": ["relu"], "mhsa": false}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "conv"}]
}"#;

pub const REDUCED: [(&str, &str); 5] = [
    ("medium", MEDIUM),
    ("tiny", TINY),
    ("deep", DEEP),
    ("wide", WIDE),
    ("conv_only", CONV_ONLY),
];

pub fn space(json: &str) -> SearchSpace {
    SearchSpace::from_json(json).expect("fixture space is valid")
}

pub fn latency_bound(space: &SearchSpace, profile: &DeviceProfile, bound: f64) -> ConstraintSet {
    let est: LatencyEstimator = synthetic_estimator(space, profile).expect("complete table");
    ConstraintSet::new(
        vec![Constraint {
            metric: Metric::LatencyMs,
            bound,
        }],
        Some(est),
    )
    .expect("valid constraint")
}
