//! Mutation and crossover. Both operate on the structured genome, so every
//! offspring is a member of the space by construction.

use super::SubnetArch;
use crate::rng_from_seed;
use crate::space::{
    sample_attention, sample_embed, sample_ffn, sample_presence, sample_slots, EmbedChoices,
    EmbedGene, Genome, SamplingDistribution, SearchSpace, Violation,
};
use rand::Rng;

/// Resamples every choice dimension from `dist` with probability `p_mut`.
/// A depth change truncates trailing slots or appends freshly sampled ones.
pub fn mutate_genome<R: Rng + ?Sized>(
    space: &SearchSpace,
    genome: &Genome,
    dist: &SamplingDistribution,
    p_mut: f64,
    rng: &mut R,
) -> Genome {
    let mut g = genome.clone();
    let hit = |rng: &mut R| p_mut > 0.0 && rng.random::<f64>() < p_mut;
    if hit(rng) {
        g.stem_activation = space.stem.activations[dist.stem_activation.sample(rng)];
    }
    for (s, (cs, d)) in space.stages.iter().zip(&dist.stages).enumerate() {
        if s > 0 {
            if let (EmbedChoices::MhsaDownsample(a), Some(ed), EmbedGene::MhsaDownsample(gene)) = (
                &space.embeds[s - 1],
                dist.embeds[s - 1].as_ref(),
                &mut g.embeds[s - 1],
            ) {
                if hit(rng) {
                    gene.expansion = a.expansions[ed.expansion.sample(rng)];
                }
                if hit(rng) {
                    gene.activation = a.activations[ed.activation.sample(rng)];
                }
            } else if hit(rng) {
                g.embeds[s - 1] =
                    sample_embed(&space.embeds[s - 1], dist.embeds[s - 1].as_ref(), rng);
            }
        }
        let stage = &mut g.stages[s];
        if hit(rng) {
            stage.width = cs.widths[d.width.sample(rng)];
        }
        if hit(rng) {
            let depth = cs.depths[d.depth.sample(rng)];
            if depth < stage.slots.len() {
                stage.slots.truncate(depth);
            } else {
                let extra = sample_slots(cs, d, depth - stage.slots.len(), rng);
                stage.slots.extend(extra);
            }
        }
        for slot in &mut stage.slots {
            if let (Some(a), Some(ad)) = (&cs.mhsa, &d.attention) {
                if hit(rng) {
                    slot.attention = sample_presence(d, rng)
                        .then(|| sample_attention(a, &ad.expansion, &ad.activation, rng));
                } else if let Some(gene) = &mut slot.attention {
                    if hit(rng) {
                        gene.expansion = a.expansions[ad.expansion.sample(rng)];
                    }
                    if hit(rng) {
                        gene.activation = a.activations[ad.activation.sample(rng)];
                    }
                }
            }
            let fresh = sample_ffn(cs, d, rng);
            if hit(rng) {
                slot.ffn.ffn_type = fresh.ffn_type;
            }
            if hit(rng) {
                slot.ffn.expansion = fresh.expansion;
            }
            if hit(rng) {
                slot.ffn.kernel = fresh.kernel;
            }
            if hit(rng) {
                slot.ffn.activation = fresh.activation;
            }
        }
    }
    g
}

/// Each stage (width, depth, attention placement and block choices) comes
/// whole from one uniformly chosen parent; the stem and embedding choices
/// are inherited the same way.
pub fn crossover_genome<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let pick = |rng: &mut R| rng.random::<bool>();
    let stem_activation = if pick(rng) {
        a.stem_activation
    } else {
        b.stem_activation
    };
    let stages = a
        .stages
        .iter()
        .zip(&b.stages)
        .map(|(x, y)| if pick(rng) { x.clone() } else { y.clone() })
        .collect();
    let embeds = a
        .embeds
        .iter()
        .zip(&b.embeds)
        .map(|(x, y)| if pick(rng) { *x } else { *y })
        .collect();
    Genome {
        stem_activation,
        stages,
        embeds,
    }
}

/// [`mutate_genome`] on the flat form; fails when `arch` is not in `space`.
pub fn mutate(
    space: &SearchSpace,
    arch: &SubnetArch,
    dist: &SamplingDistribution,
    p_mut: f64,
    seed: u64,
) -> Result<SubnetArch, Vec<Violation>> {
    let g = Genome::from_arch(space, arch)?;
    let mut rng = rng_from_seed(seed);
    Ok(mutate_genome(space, &g, dist, p_mut, &mut rng).to_arch(space))
}

/// [`crossover_genome`] on the flat form; fails when a parent is not in
/// `space`.
pub fn crossover(
    space: &SearchSpace,
    a: &SubnetArch,
    b: &SubnetArch,
    seed: u64,
) -> Result<SubnetArch, Vec<Violation>> {
    let ga = Genome::from_arch(space, a)?;
    let gb = Genome::from_arch(space, b)?;
    let mut rng = rng_from_seed(seed);
    Ok(crossover_genome(&ga, &gb, &mut rng).to_arch(space))
}
