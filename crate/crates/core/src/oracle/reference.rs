//! The five reference network variants used to pin down the relative
//! behavior of the standard device profiles.

use crate::space::{AttentionGene, EmbedGene, FfnGene, Genome, SearchSpace, SlotGene, StageGene};
use crate::subnet::{Activation, FfnType, SubnetArch};
use serde::{Deserialize, Serialize};

/// A fixed-topology network: widths (32, 48, 96, 176), depths (2, 2, 6, 4),
/// attention before the last two FFN blocks of stages 3 and 4, FFN E=4,
/// K=3. Variants differ in FFN type, activation and the value expansion of
/// every attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceVariant {
    pub name: &'static str,
    pub ffn_type: FfnType,
    pub activation: Activation,
    pub v_ratio: u32,
}

pub const REFERENCE_VARIANTS: [ReferenceVariant; 5] = [
    ReferenceVariant {
        name: "unified_gelu_v4",
        ffn_type: FfnType::Unified,
        activation: Activation::Gelu,
        v_ratio: 4,
    },
    ReferenceVariant {
        name: "unified_gelu_v2",
        ffn_type: FfnType::Unified,
        activation: Activation::Gelu,
        v_ratio: 2,
    },
    ReferenceVariant {
        name: "unified_relu_v4",
        ffn_type: FfnType::Unified,
        activation: Activation::Relu,
        v_ratio: 4,
    },
    ReferenceVariant {
        name: "fused_gelu_v4",
        ffn_type: FfnType::Fused,
        activation: Activation::Gelu,
        v_ratio: 4,
    },
    ReferenceVariant {
        name: "fused_relu_v4",
        ffn_type: FfnType::Fused,
        activation: Activation::Relu,
        v_ratio: 4,
    },
];

/// Expected fastest-to-slowest order of the variants per standard profile.
pub const REFERENCE_ORDERINGS: [(&str, [&str; 5]); 3] = [
    (
        "cpu_like",
        [
            "unified_relu_v4",
            "unified_gelu_v2",
            "fused_relu_v4",
            "unified_gelu_v4",
            "fused_gelu_v4",
        ],
    ),
    (
        "gpu_like",
        [
            "unified_gelu_v2",
            "unified_relu_v4",
            "unified_gelu_v4",
            "fused_relu_v4",
            "fused_gelu_v4",
        ],
    ),
    (
        "vpu_like",
        [
            "fused_relu_v4",
            "unified_relu_v4",
            "fused_gelu_v4",
            "unified_gelu_v2",
            "unified_gelu_v4",
        ],
    ),
];

pub fn reference_genome(v: &ReferenceVariant) -> Genome {
    let ffn = FfnGene {
        ffn_type: v.ffn_type,
        expansion: 4,
        kernel: 3,
        activation: v.activation,
    };
    let attention = AttentionGene {
        expansion: v.v_ratio,
        activation: v.activation,
    };
    let stage = |width: u32, depth: usize, with_attention: usize| StageGene {
        width,
        slots: (0..depth)
            .map(|i| SlotGene {
                attention: (i + with_attention >= depth).then_some(attention),
                ffn,
            })
            .collect(),
    };
    Genome {
        stem_activation: v.activation,
        stages: vec![
            stage(32, 2, 0),
            stage(48, 2, 0),
            stage(96, 6, 2),
            stage(176, 4, 2),
        ],
        embeds: vec![
            EmbedGene::Conv,
            EmbedGene::Conv,
            EmbedGene::MhsaDownsample(attention),
        ],
    }
}

/// The variant laid out in `space` (expected to be the default space).
pub fn reference_arch(space: &SearchSpace, v: &ReferenceVariant) -> SubnetArch {
    reference_genome(v).to_arch(space)
}
