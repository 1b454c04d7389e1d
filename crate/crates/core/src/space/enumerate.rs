//! Exhaustive enumeration of small spaces.
//!
//! Subnets are numbered in mixed radix: stem activation is the most
//! significant digit, followed by stage 1, embedding 1, stage 2 and so on.
//! Inside a stage the order is width, depth, then slot by slot, and inside a
//! slot the attention option (none first) precedes the FFN choices. All
//! choices follow the listing order of the space.

use super::{
    AttentionGene, ChoiceSet, EmbedChoices, EmbedGene, FfnGene, Genome, SearchSpace, SlotGene,
    SpaceError, StageGene,
};
use crate::subnet::SubnetArch;
use num_bigint::BigUint;
use num_traits::ToPrimitive;

fn ffn_at(cs: &ChoiceSet, mut i: usize) -> FfnGene {
    let act = cs.activations[i % cs.activations.len()];
    i /= cs.activations.len();
    let kernel = cs.kernels[i % cs.kernels.len()];
    i /= cs.kernels.len();
    let expansion = cs.expansions[i % cs.expansions.len()];
    i /= cs.expansions.len();
    FfnGene {
        ffn_type: cs.ffn_types[i],
        expansion,
        kernel,
        activation: act,
    }
}

fn attention_at(
    expansions: &[u32],
    activations: &[crate::subnet::Activation],
    i: usize,
) -> AttentionGene {
    AttentionGene {
        expansion: expansions[i / activations.len()],
        activation: activations[i % activations.len()],
    }
}

/// Subnet counts of one stage, split by depth, for a fixed width.
struct StageCounter {
    per_slot: u64,
    per_depth: Vec<u64>,
    per_width: u64,
}

impl StageCounter {
    fn new(cs: &ChoiceSet) -> Self {
        let per_slot = (cs.ffn_choices() * (1 + cs.mhsa_choices())) as u64;
        let per_depth: Vec<u64> = cs
            .depths
            .iter()
            .map(|&n| per_slot.saturating_pow(n as u32))
            .collect();
        let per_width = per_depth.iter().fold(0u64, |a, &b| a.saturating_add(b));
        StageCounter {
            per_slot,
            per_depth,
            per_width,
        }
    }

    fn gene_at(&self, cs: &ChoiceSet, index: u64) -> StageGene {
        let width = cs.widths[(index / self.per_width) as usize];
        let mut r = index % self.per_width;
        let mut d = 0;
        while r >= self.per_depth[d] {
            r -= self.per_depth[d];
            d += 1;
        }
        let depth = cs.depths[d];
        let f = cs.ffn_choices() as u64;
        // slot 0 is the most significant digit
        let mut digits = vec![0u64; depth];
        for slot in (0..depth).rev() {
            digits[slot] = r % self.per_slot;
            r /= self.per_slot;
        }
        let slots = digits
            .into_iter()
            .map(|v| {
                let attention = match (v / f, &cs.mhsa) {
                    (0, _) | (_, None) => None,
                    (a, Some(m)) => {
                        Some(attention_at(&m.expansions, &m.activations, a as usize - 1))
                    }
                };
                SlotGene {
                    attention,
                    ffn: ffn_at(cs, (v % f) as usize),
                }
            })
            .collect();
        StageGene { width, slots }
    }
}

/// Random-access, deterministic stream over every subnet of a space.
pub struct SubnetStream<'a> {
    space: &'a SearchSpace,
    stages: Vec<StageCounter>,
    /// Radix of every digit, most significant first.
    radices: Vec<u64>,
    total: u64,
    next: u64,
}

impl<'a> SubnetStream<'a> {
    fn new(space: &'a SearchSpace, cap: u64) -> Result<Self, SpaceError> {
        let count = space.count_subnets();
        if count > BigUint::from(cap) {
            return Err(SpaceError::SpaceTooLarge { count, cap });
        }
        let total = count.to_u64().expect("count bounded by a u64 cap");
        let stages: Vec<StageCounter> = space.stages.iter().map(StageCounter::new).collect();
        let mut radices = vec![space.stem.activations.len() as u64];
        for (s, st) in stages.iter().enumerate() {
            if s > 0 {
                radices.push(space.embeds[s - 1].choices() as u64);
            }
            radices.push(st.per_width * space.stages[s].widths.len() as u64);
        }
        Ok(SubnetStream {
            space,
            stages,
            radices,
            total,
            next: 0,
        })
    }

    /// Number of subnets in the stream.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// The genome with the given position in the enumeration order.
    pub fn genome_at(&self, index: u64) -> Genome {
        assert!(index < self.total, "index {index} out of range");
        let mut digits = vec![0u64; self.radices.len()];
        let mut r = index;
        for (d, &radix) in digits.iter_mut().zip(&self.radices).rev() {
            *d = r % radix;
            r /= radix;
        }
        let space = self.space;
        let mut it = digits.into_iter();
        let stem_activation = space.stem.activations[it.next().expect("stem digit") as usize];
        let mut stages = Vec::with_capacity(space.stages.len());
        let mut embeds = Vec::with_capacity(space.embeds.len());
        for (s, counter) in self.stages.iter().enumerate() {
            if s > 0 {
                let e = it.next().expect("embed digit") as usize;
                embeds.push(match &space.embeds[s - 1] {
                    EmbedChoices::Conv => EmbedGene::Conv,
                    EmbedChoices::MhsaDownsample(a) => {
                        EmbedGene::MhsaDownsample(attention_at(&a.expansions, &a.activations, e))
                    }
                });
            }
            let j = it.next().expect("stage digit");
            stages.push(counter.gene_at(&space.stages[s], j));
        }
        Genome {
            stem_activation,
            stages,
            embeds,
        }
    }

    pub fn subnet_at(&self, index: u64) -> SubnetArch {
        self.genome_at(index).to_arch(self.space)
    }

    pub fn next_genome(&mut self) -> Option<Genome> {
        (self.next < self.total).then(|| {
            let g = self.genome_at(self.next);
            self.next += 1;
            g
        })
    }
}

impl Iterator for SubnetStream<'_> {
    type Item = SubnetArch;

    fn next(&mut self) -> Option<SubnetArch> {
        self.next_genome().map(|g| g.to_arch(self.space))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for SubnetStream<'_> {}

/// Streams every subnet of `space`, failing when the space holds more than
/// `cap` subnets.
pub fn enumerate_subnets(space: &SearchSpace, cap: u64) -> Result<SubnetStream<'_>, SpaceError> {
    SubnetStream::new(space, cap)
}

/// Genome form of [`enumerate_subnets`].
pub fn enumerate_genomes(
    space: &SearchSpace,
    cap: u64,
) -> Result<impl Iterator<Item = Genome> + '_, SpaceError> {
    let mut stream = SubnetStream::new(space, cap)?;
    Ok(std::iter::from_fn(move || stream.next_genome()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_default_space, validate};
    use std::collections::HashSet;

    fn tiny() -> SearchSpace {
        SearchSpace::from_json(
            r#"{"stem": {"activations": ["relu"]},
                "stages": [{"widths": [24, 24, 4], "depths": [2]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn enumerates_every_subnet_once() {
        let s = tiny();
        let all: Vec<_> = enumerate_subnets(&s, 1000).unwrap().collect();
        assert_eq!(all.len(), 576);
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 576);
        for a in &all {
            validate(&s, a).unwrap();
        }
    }

    #[test]
    fn default_space_is_too_large() {
        let s = build_default_space();
        assert!(matches!(
            enumerate_subnets(&s, 100),
            Err(SpaceError::SpaceTooLarge { cap: 100, .. })
        ));
    }

    #[test]
    fn order_starts_at_first_listed_choices() {
        let s = tiny();
        let g = enumerate_subnets(&s, 1000).unwrap().genome_at(0);
        let ffn = g.stages[0].slots[0].ffn;
        assert_eq!(ffn.ffn_type, s.stages[0].ffn_types[0]);
        assert_eq!(ffn.expansion, 2);
        assert_eq!(ffn.kernel, 3);
    }
}
