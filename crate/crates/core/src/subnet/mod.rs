//! Concrete architectures: the flat block list, cost accounting, the 44x24
//! binary encoding and the genetic operators.

mod cost;
mod encoding;
mod genetic;

pub use cost::{
    block_cost, count_flops, count_flops_with, count_params, count_params_with, AttentionShape,
    BlockCost, Layer, LayerKind,
};
pub use encoding::{
    decode, encode, EncodedSubnet, EncodingError, ENCODING_ROWS, ENCODING_WIDTH, FIELD_ACTIVATION,
    FIELD_FFN_EXPANSION, FIELD_FFN_TYPE, FIELD_IN_WIDTH, FIELD_KERNEL, FIELD_MHSA_EXPANSION,
    FIELD_OUT_WIDTH, FIELD_STAGE,
};
pub use genetic::{crossover, crossover_genome, mutate, mutate_genome};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Format version written into every subnet JSON document.
pub const SUBNET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

impl Activation {
    /// Position in the fixed `{GELU, ReLU}` listing order.
    pub fn index(self) -> usize {
        match self {
            Activation::Gelu => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Activation::Gelu),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "G",
            Activation::Relu => "R",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnType {
    /// Dense KxK expansion followed by a pointwise projection (compute bound).
    Fused,
    /// Pointwise expansion, depthwise KxK, pointwise projection (memory bound).
    Unified,
}

impl FfnType {
    /// Position in the fixed `{Fused, Unified}` listing order.
    pub fn index(self) -> usize {
        match self {
            FfnType::Fused => 0,
            FfnType::Unified => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(FfnType::Fused),
            1 => Some(FfnType::Unified),
            _ => None,
        }
    }

    pub fn block_kind(self) -> BlockKind {
        match self {
            FfnType::Fused => BlockKind::FusedFfn,
            FfnType::Unified => BlockKind::UnifiedFfn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Stem,
    UnifiedFfn,
    FusedFfn,
    Mhsa,
    Embed,
    MhsaDownsample,
    OutputHead,
}

impl BlockKind {
    pub fn is_ffn(self) -> bool {
        matches!(self, BlockKind::UnifiedFfn | BlockKind::FusedFfn)
    }

    pub fn ffn_type(self) -> Option<FfnType> {
        match self {
            BlockKind::FusedFfn => Some(FfnType::Fused),
            BlockKind::UnifiedFfn => Some(FfnType::Unified),
            _ => None,
        }
    }
}

/// Identity of one profileable block instantiation. Two blocks with equal
/// keys cost the same on any device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockKey {
    pub kind: BlockKind,
    pub in_width: u32,
    pub out_width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    /// Output feature-map side length in pixels.
    pub resolution: u32,
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}({}->{}, r={}",
            self.kind, self.in_width, self.out_width, self.resolution
        )?;
        if let Some(e) = self.expansion {
            write!(f, ", E={e}")?;
        }
        if let Some(k) = self.kernel {
            write!(f, ", K={k}")?;
        }
        if let Some(a) = self.activation {
            write!(f, ", A={a}")?;
        }
        f.write_str(")")
    }
}

/// One block of a concrete architecture.
///
/// `stage` is 0-based. The stem belongs to stage 0, an embedding layer
/// belongs to the stage it feeds, and the output head to the last stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub stage: usize,
    pub kind: BlockKind,
    pub in_width: u32,
    pub out_width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    pub resolution: u32,
}

impl BlockSpec {
    pub fn key(&self) -> BlockKey {
        BlockKey {
            kind: self.kind,
            in_width: self.in_width,
            out_width: self.out_width,
            expansion: self.expansion,
            kernel: self.kernel,
            activation: self.activation,
            resolution: self.resolution,
        }
    }
}

/// A concrete architecture: an ordered block list from stem to output head.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubnetArch {
    pub input_resolution: u32,
    pub blocks: Vec<BlockSpec>,
}

impl SubnetArch {
    pub fn num_stages(&self) -> usize {
        self.blocks.iter().map(|b| b.stage + 1).max().unwrap_or(0)
    }

    /// Half-open block index range of every stage, including the embedding
    /// layer that opens it.
    pub fn stage_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges: Vec<std::ops::Range<usize>> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            match ranges.get_mut(b.stage) {
                Some(r) => r.end = i + 1,
                None => {
                    while ranges.len() < b.stage {
                        ranges.push(i..i);
                    }
                    ranges.push(i..i + 1);
                }
            }
        }
        ranges
    }

    /// Width of every stage as carried by its FFN blocks (or the block that
    /// opens the stage when it has none).
    pub fn stage_widths(&self) -> Vec<u32> {
        self.stage_ranges()
            .into_iter()
            .map(|r| {
                self.blocks[r.clone()]
                    .iter()
                    .find(|b| b.kind.is_ffn())
                    .or_else(|| {
                        self.blocks[r]
                            .iter()
                            .find(|b| b.kind != BlockKind::OutputHead)
                    })
                    .map(|b| b.out_width)
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn count_kind(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind == kind).count()
    }

    /// Number of self-attention blocks inside stages (the downsampling
    /// embedding is not counted).
    pub fn mhsa_count(&self) -> usize {
        self.count_kind(BlockKind::Mhsa)
    }

    pub fn to_document(&self) -> SubnetDocument {
        SubnetDocument {
            format_version: SUBNET_FORMAT_VERSION,
            input_resolution: self.input_resolution,
            stage_widths: self.stage_widths(),
            blocks: self.blocks.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("subnet document serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("subnet document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SubnetDocumentError> {
        let doc: SubnetDocument = serde_json::from_str(text)?;
        SubnetArch::try_from(doc)
    }
}

/// JSON form of [`SubnetArch`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetDocument {
    pub format_version: u32,
    pub input_resolution: u32,
    #[serde(default)]
    pub stage_widths: Vec<u32>,
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SubnetDocumentError {
    #[error("invalid subnet JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported subnet format_version {0}")]
    Version(u32),
    #[error("stage_widths {declared:?} disagree with block list {derived:?}")]
    WidthMismatch {
        declared: Vec<u32>,
        derived: Vec<u32>,
    },
}

impl TryFrom<SubnetDocument> for SubnetArch {
    type Error = SubnetDocumentError;

    fn try_from(doc: SubnetDocument) -> Result<Self, Self::Error> {
        if doc.format_version != SUBNET_FORMAT_VERSION {
            return Err(SubnetDocumentError::Version(doc.format_version));
        }
        let arch = SubnetArch {
            input_resolution: doc.input_resolution,
            blocks: doc.blocks,
        };
        if !doc.stage_widths.is_empty() {
            let derived = arch.stage_widths();
            if derived != doc.stage_widths {
                return Err(SubnetDocumentError::WidthMismatch {
                    declared: doc.stage_widths,
                    derived,
                });
            }
        }
        Ok(arch)
    }
}

impl Serialize for SubnetArch {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubnetArch {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = SubnetDocument::deserialize(deserializer)?;
        SubnetArch::try_from(doc).map_err(serde::de::Error::custom)
    }
}
