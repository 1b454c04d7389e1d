//! Every profileable block instantiation of a space, grouped into the rows
//! of the space table.

use super::{AttentionChoices, EmbedChoices, SearchSpace};
use crate::subnet::{Activation, BlockKey, BlockKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One row of the block census: a label such as `stage3.mhsa` and the keys
/// it contributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub label: String,
    pub keys: Vec<BlockKey>,
}

impl CensusRow {
    pub fn count(&self) -> usize {
        self.keys.len()
    }
}

fn attention_keys(
    kind: BlockKind,
    in_widths: &[u32],
    out_widths: &[u32],
    a: &AttentionChoices,
    resolution: u32,
    same_width: bool,
) -> Vec<BlockKey> {
    let mut keys = Vec::new();
    for &cin in in_widths {
        for &cout in out_widths {
            if same_width && cin != cout {
                continue;
            }
            for &e in &a.expansions {
                for &act in &a.activations {
                    keys.push(BlockKey {
                        kind,
                        in_width: cin,
                        out_width: cout,
                        expansion: Some(e),
                        kernel: None,
                        activation: Some(act),
                        resolution,
                    });
                }
            }
        }
    }
    keys
}

/// Census rows in table order: stem, then per stage its embedding layer
/// (from stage 2 on), MHSA row (when allowed) and FFN row. The output heads
/// are not part of the census; see [`enumerate_head_blocks`].
pub fn lut_census(space: &SearchSpace) -> Vec<CensusRow> {
    let mut rows = Vec::new();
    let stem_keys = space.stages[0]
        .widths
        .iter()
        .flat_map(|&w| {
            space.stem.activations.iter().map(move |&act| BlockKey {
                kind: BlockKind::Stem,
                in_width: 3,
                out_width: w,
                expansion: None,
                kernel: Some(3),
                activation: Some(act),
                resolution: space.stage_resolution(0),
            })
        })
        .collect();
    rows.push(CensusRow {
        label: "stem".into(),
        keys: stem_keys,
    });
    for (s, cs) in space.stages.iter().enumerate() {
        let n = s + 1;
        let resolution = space.stage_resolution(s);
        if s > 0 {
            let prev = &space.stages[s - 1].widths;
            let keys = match &space.embeds[s - 1] {
                EmbedChoices::Conv => prev
                    .iter()
                    .flat_map(|&cin| {
                        cs.widths.iter().map(move |&cout| BlockKey {
                            kind: BlockKind::Embed,
                            in_width: cin,
                            out_width: cout,
                            expansion: None,
                            kernel: Some(3),
                            activation: None,
                            resolution,
                        })
                    })
                    .collect(),
                EmbedChoices::MhsaDownsample(a) => attention_keys(
                    BlockKind::MhsaDownsample,
                    prev,
                    &cs.widths,
                    a,
                    resolution,
                    false,
                ),
            };
            rows.push(CensusRow {
                label: format!("embed{}", s),
                keys,
            });
        }
        if let Some(a) = &cs.mhsa {
            rows.push(CensusRow {
                label: format!("stage{n}.mhsa"),
                keys: attention_keys(BlockKind::Mhsa, &cs.widths, &cs.widths, a, resolution, true),
            });
        }
        let mut ffn = Vec::new();
        for &w in &cs.widths {
            for &t in &cs.ffn_types {
                for &e in &cs.expansions {
                    for &k in &cs.kernels {
                        for &act in &cs.activations {
                            ffn.push(BlockKey {
                                kind: t.block_kind(),
                                in_width: w,
                                out_width: w,
                                expansion: Some(e),
                                kernel: Some(k),
                                activation: Some(act),
                                resolution,
                            });
                        }
                    }
                }
            }
        }
        rows.push(CensusRow {
            label: format!("stage{n}.ffn"),
            keys: ffn,
        });
    }
    rows
}

/// Every distinct block instantiation, output heads excluded, in census
/// order.
pub fn enumerate_lut_blocks(space: &SearchSpace) -> Vec<BlockKey> {
    let mut seen = BTreeSet::new();
    lut_census(space)
        .into_iter()
        .flat_map(|r| r.keys)
        .filter(|k| seen.insert(*k))
        .collect()
}

/// One output linear layer per final-stage width.
pub fn enumerate_head_blocks(space: &SearchSpace) -> Vec<BlockKey> {
    space.stages[space.last_stage()]
        .widths
        .iter()
        .map(|&w| BlockKey {
            kind: BlockKind::OutputHead,
            in_width: w,
            out_width: space.num_classes,
            expansion: None,
            kernel: None,
            activation: None::<Activation>,
            resolution: 1,
        })
        .collect()
}

/// Every key a complete latency table for `space` must hold.
pub fn lut_keys(space: &SearchSpace) -> Vec<BlockKey> {
    let mut keys = enumerate_lut_blocks(space);
    keys.extend(enumerate_head_blocks(space));
    keys
}
