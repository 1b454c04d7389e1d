//! Structured view of a subnet: the resolved choice for every searchable
//! slot. Sampling and the genetic operators work on this form; everything
//! that costs or encodes a subnet works on the flat [`SubnetArch`].

use super::{validate, EmbedChoices, SearchSpace, Violation};
use crate::subnet::{Activation, BlockKind, BlockSpec, FfnType, SubnetArch};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FfnGene {
    pub ffn_type: FfnType,
    pub expansion: u32,
    pub kernel: u32,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionGene {
    pub expansion: u32,
    pub activation: Activation,
}

/// One FFN slot, optionally preceded by an MHSA block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotGene {
    pub attention: Option<AttentionGene>,
    pub ffn: FfnGene,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageGene {
    pub width: u32,
    pub slots: Vec<SlotGene>,
}

impl StageGene {
    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    pub fn mhsa_count(&self) -> usize {
        self.slots.iter().filter(|s| s.attention.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbedGene {
    Conv,
    MhsaDownsample(AttentionGene),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub stem_activation: Activation,
    pub stages: Vec<StageGene>,
    pub embeds: Vec<EmbedGene>,
}

impl Genome {
    pub fn mhsa_count(&self) -> usize {
        self.stages.iter().map(StageGene::mhsa_count).sum()
    }

    /// Lays the genome out as blocks: stem, then per stage the embedding
    /// layer (from stage 2 on) and `[MHSA] FFN` per slot, then the head.
    pub fn to_arch(&self, space: &SearchSpace) -> SubnetArch {
        let mut blocks = Vec::with_capacity(space.max_block_count());
        let first_width = self.stages[0].width;
        blocks.push(BlockSpec {
            stage: 0,
            kind: BlockKind::Stem,
            in_width: 3,
            out_width: first_width,
            expansion: None,
            kernel: Some(3),
            activation: Some(self.stem_activation),
            resolution: space.stage_resolution(0),
        });
        for (s, stage) in self.stages.iter().enumerate() {
            let resolution = space.stage_resolution(s);
            if s > 0 {
                let in_width = self.stages[s - 1].width;
                blocks.push(match self.embeds[s - 1] {
                    EmbedGene::Conv => BlockSpec {
                        stage: s,
                        kind: BlockKind::Embed,
                        in_width,
                        out_width: stage.width,
                        expansion: None,
                        kernel: Some(3),
                        activation: None,
                        resolution,
                    },
                    EmbedGene::MhsaDownsample(a) => BlockSpec {
                        stage: s,
                        kind: BlockKind::MhsaDownsample,
                        in_width,
                        out_width: stage.width,
                        expansion: Some(a.expansion),
                        kernel: None,
                        activation: Some(a.activation),
                        resolution,
                    },
                });
            }
            for slot in &stage.slots {
                if let Some(a) = slot.attention {
                    blocks.push(BlockSpec {
                        stage: s,
                        kind: BlockKind::Mhsa,
                        in_width: stage.width,
                        out_width: stage.width,
                        expansion: Some(a.expansion),
                        kernel: None,
                        activation: Some(a.activation),
                        resolution,
                    });
                }
                blocks.push(BlockSpec {
                    stage: s,
                    kind: slot.ffn.ffn_type.block_kind(),
                    in_width: stage.width,
                    out_width: stage.width,
                    expansion: Some(slot.ffn.expansion),
                    kernel: Some(slot.ffn.kernel),
                    activation: Some(slot.ffn.activation),
                    resolution,
                });
            }
        }
        let last = self.stages.len() - 1;
        blocks.push(BlockSpec {
            stage: last,
            kind: BlockKind::OutputHead,
            in_width: self.stages[last].width,
            out_width: space.num_classes,
            expansion: None,
            kernel: None,
            activation: None,
            resolution: 1,
        });
        SubnetArch {
            input_resolution: space.input_resolution,
            blocks,
        }
    }

    /// Inverse of [`Genome::to_arch`] for architectures that validate.
    pub fn from_arch(space: &SearchSpace, arch: &SubnetArch) -> Result<Genome, Vec<Violation>> {
        validate(space, arch)?;
        let mut stem_activation = Activation::Relu;
        let mut stages: Vec<StageGene> = Vec::with_capacity(space.stages.len());
        let mut embeds = Vec::with_capacity(space.embeds.len());
        let mut pending: Option<AttentionGene> = None;
        for b in &arch.blocks {
            match b.kind {
                BlockKind::Stem => {
                    stem_activation = b.activation.expect("validated stem has activation");
                    stages.push(StageGene {
                        width: b.out_width,
                        slots: Vec::new(),
                    });
                }
                BlockKind::Embed => {
                    embeds.push(EmbedGene::Conv);
                    stages.push(StageGene {
                        width: b.out_width,
                        slots: Vec::new(),
                    });
                }
                BlockKind::MhsaDownsample => {
                    embeds.push(EmbedGene::MhsaDownsample(attention_gene(b)));
                    stages.push(StageGene {
                        width: b.out_width,
                        slots: Vec::new(),
                    });
                }
                BlockKind::Mhsa => pending = Some(attention_gene(b)),
                BlockKind::FusedFfn | BlockKind::UnifiedFfn => {
                    let ffn = FfnGene {
                        ffn_type: b.kind.ffn_type().expect("ffn kind"),
                        expansion: b.expansion.expect("validated ffn has expansion"),
                        kernel: b.kernel.expect("validated ffn has kernel"),
                        activation: b.activation.expect("validated ffn has activation"),
                    };
                    let stage = stages.last_mut().expect("stem precedes blocks");
                    stage.slots.push(SlotGene {
                        attention: pending.take(),
                        ffn,
                    });
                }
                BlockKind::OutputHead => {}
            }
        }
        debug_assert_eq!(embeds.len(), space.embeds.len());
        debug_assert!(space.embeds.iter().zip(&embeds).all(|(c, g)| matches!(
            (c, g),
            (EmbedChoices::Conv, EmbedGene::Conv)
                | (
                    EmbedChoices::MhsaDownsample(_),
                    EmbedGene::MhsaDownsample(_)
                )
        )));
        Ok(Genome {
            stem_activation,
            stages,
            embeds,
        })
    }
}

fn attention_gene(b: &BlockSpec) -> AttentionGene {
    AttentionGene {
        expansion: b.expansion.expect("validated attention has expansion"),
        activation: b.activation.expect("validated attention has activation"),
    }
}
