//! Per-slot categorical distributions over the space and the samplers that
//! draw subnets from them.

use super::{
    AttentionChoices, AttentionGene, ChoiceSet, EmbedChoices, EmbedGene, FfnGene, Genome,
    SearchSpace, SlotGene, StageGene,
};
use crate::rng_from_seed;
use crate::subnet::{Activation, FfnType, SubnetArch};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("distributions have different supports: {0}")]
    SupportMismatch(String),
    #[error("invalid distribution: {0}")]
    Invalid(String),
}

/// Probability vector over the options of one choice dimension, aligned with
/// the listing order of that dimension in the space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Categorical(pub Vec<f64>);

impl Categorical {
    pub fn uniform(n: usize) -> Self {
        Categorical(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        Categorical(p)
    }

    /// Normalizes non-negative counts; all-zero counts yield `None`.
    pub fn from_counts(counts: &[f64]) -> Option<Self> {
        let total: f64 = counts.iter().sum();
        (total > 0.0).then(|| Categorical(counts.iter().map(|c| c / total).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// Inverse-CDF draw. Options with zero mass are never returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.sum();
        let mut acc = 0.0;
        for (i, &p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.0
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.0.len() - 1)
    }

    /// Raises every entry to at least `floor`, then renormalizes.
    pub fn apply_floor(&mut self, floor: f64) {
        for p in &mut self.0 {
            *p = p.max(floor);
        }
        let total = self.sum();
        for p in &mut self.0 {
            *p /= total;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDistribution {
    /// `[absent, present]`: an independent Bernoulli per FFN slot.
    pub presence: Categorical,
    pub expansion: Categorical,
    pub activation: Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDistribution {
    pub width: Categorical,
    pub depth: Categorical,
    pub ffn_type: Categorical,
    pub ffn_expansion: Categorical,
    pub kernel: Categorical,
    pub ffn_activation: Categorical,
    pub attention: Option<AttentionDistribution>,
}

/// Only attention-downsampling embeddings have searchable options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedDistribution {
    pub expansion: Categorical,
    pub activation: Categorical,
}

/// The evolving search space: one categorical vector per choice dimension.
/// Block-level vectors are shared by every slot of a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub stem_activation: Categorical,
    pub stages: Vec<StageDistribution>,
    pub embeds: Vec<Option<EmbedDistribution>>,
}

impl SamplingDistribution {
    /// Every vector with a stable name, in a fixed order.
    pub fn named_vectors(&self) -> Vec<(String, &Categorical)> {
        let mut out = vec![("stem.activation".to_string(), &self.stem_activation)];
        for (s, st) in self.stages.iter().enumerate() {
            let n = s + 1;
            out.push((format!("stage{n}.width"), &st.width));
            out.push((format!("stage{n}.depth"), &st.depth));
            out.push((format!("stage{n}.ffn_type"), &st.ffn_type));
            out.push((format!("stage{n}.ffn_expansion"), &st.ffn_expansion));
            out.push((format!("stage{n}.kernel"), &st.kernel));
            out.push((format!("stage{n}.ffn_activation"), &st.ffn_activation));
            if let Some(a) = &st.attention {
                out.push((format!("stage{n}.mhsa_presence"), &a.presence));
                out.push((format!("stage{n}.mhsa_expansion"), &a.expansion));
                out.push((format!("stage{n}.mhsa_activation"), &a.activation));
            }
        }
        for (e, emb) in self.embeds.iter().enumerate() {
            if let Some(d) = emb {
                out.push((format!("embed{}.expansion", e + 1), &d.expansion));
                out.push((format!("embed{}.activation", e + 1), &d.activation));
            }
        }
        out
    }

    pub fn vectors(&self) -> Vec<&Categorical> {
        self.named_vectors().into_iter().map(|(_, v)| v).collect()
    }

    pub fn vectors_mut(&mut self) -> Vec<&mut Categorical> {
        let mut out = vec![&mut self.stem_activation];
        for st in &mut self.stages {
            out.push(&mut st.width);
            out.push(&mut st.depth);
            out.push(&mut st.ffn_type);
            out.push(&mut st.ffn_expansion);
            out.push(&mut st.kernel);
            out.push(&mut st.ffn_activation);
            if let Some(a) = &mut st.attention {
                out.push(&mut a.presence);
                out.push(&mut a.expansion);
                out.push(&mut a.activation);
            }
        }
        for d in self.embeds.iter_mut().flatten() {
            out.push(&mut d.expansion);
            out.push(&mut d.activation);
        }
        out
    }

    /// Describes the support: vector names and lengths.
    pub fn support(&self) -> Vec<(String, usize)> {
        self.named_vectors()
            .into_iter()
            .map(|(n, v)| (n, v.len()))
            .collect()
    }

    /// Sum of the entropies of all vectors (nats).
    pub fn entropy(&self) -> f64 {
        self.vectors().iter().map(|v| v.entropy()).sum()
    }

    pub fn apply_floor(&mut self, floor: f64) {
        for v in self.vectors_mut() {
            v.apply_floor(floor);
        }
    }

    /// Checks non-negativity and unit sums within `tol`.
    pub fn check(&self, tol: f64) -> Result<(), DistributionError> {
        for (name, v) in self.named_vectors() {
            if v.is_empty() {
                return Err(DistributionError::Invalid(format!("{name} is empty")));
            }
            if let Some(p) = v.0.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                return Err(DistributionError::Invalid(format!("{name} has entry {p}")));
            }
            if (v.sum() - 1.0).abs() > tol {
                return Err(DistributionError::Invalid(format!(
                    "{name} sums to {}",
                    v.sum()
                )));
            }
        }
        Ok(())
    }

    /// Checks that the vectors line up with the choice sets of `space`.
    pub fn matches_space(&self, space: &SearchSpace) -> bool {
        self.support() == init_uniform_distribution(space).support()
    }

    /// Distribution putting all mass on the choices of `genome`. Slot-level
    /// vectors take the choices of the first slot of each stage, so the
    /// result is only a point mass when every slot of a stage agrees.
    pub fn point_mass(space: &SearchSpace, genome: &Genome) -> Self {
        let pos = |xs: &[u32], x: u32| xs.iter().position(|&v| v == x).expect("choice in space");
        let stages = space
            .stages
            .iter()
            .zip(&genome.stages)
            .map(|(cs, g)| {
                let slot = g.slots[0];
                StageDistribution {
                    width: Categorical::one_hot(cs.widths.len(), pos(&cs.widths, g.width)),
                    depth: Categorical::one_hot(
                        cs.depths.len(),
                        cs.depths
                            .iter()
                            .position(|&d| d == g.depth())
                            .expect("depth"),
                    ),
                    ffn_type: Categorical::one_hot(
                        cs.ffn_types.len(),
                        cs.ffn_types
                            .iter()
                            .position(|&t| t == slot.ffn.ffn_type)
                            .expect("type"),
                    ),
                    ffn_expansion: Categorical::one_hot(
                        cs.expansions.len(),
                        pos(&cs.expansions, slot.ffn.expansion),
                    ),
                    kernel: Categorical::one_hot(
                        cs.kernels.len(),
                        pos(&cs.kernels, slot.ffn.kernel),
                    ),
                    ffn_activation: one_hot_act(&cs.activations, slot.ffn.activation),
                    attention: cs.mhsa.as_ref().map(|a| {
                        let gene = slot.attention;
                        AttentionDistribution {
                            presence: Categorical::one_hot(2, usize::from(gene.is_some())),
                            expansion: match gene {
                                Some(x) => Categorical::one_hot(
                                    a.expansions.len(),
                                    pos(&a.expansions, x.expansion),
                                ),
                                None => Categorical::uniform(a.expansions.len()),
                            },
                            activation: match gene {
                                Some(x) => one_hot_act(&a.activations, x.activation),
                                None => Categorical::uniform(a.activations.len()),
                            },
                        }
                    }),
                }
            })
            .collect();
        let embeds = space
            .embeds
            .iter()
            .zip(&genome.embeds)
            .map(|(c, g)| match (c, g) {
                (EmbedChoices::MhsaDownsample(a), EmbedGene::MhsaDownsample(x)) => {
                    Some(EmbedDistribution {
                        expansion: Categorical::one_hot(
                            a.expansions.len(),
                            pos(&a.expansions, x.expansion),
                        ),
                        activation: one_hot_act(&a.activations, x.activation),
                    })
                }
                _ => None,
            })
            .collect();
        SamplingDistribution {
            stem_activation: one_hot_act(&space.stem.activations, genome.stem_activation),
            stages,
            embeds,
        }
    }
}

fn one_hot_act(acts: &[Activation], a: Activation) -> Categorical {
    Categorical::one_hot(
        acts.len(),
        acts.iter()
            .position(|&x| x == a)
            .expect("activation in space"),
    )
}

/// Uniform distribution over every choice dimension of `space`.
pub fn init_uniform_distribution(space: &SearchSpace) -> SamplingDistribution {
    let attention = |a: &AttentionChoices| AttentionDistribution {
        presence: Categorical::uniform(2),
        expansion: Categorical::uniform(a.expansions.len()),
        activation: Categorical::uniform(a.activations.len()),
    };
    SamplingDistribution {
        stem_activation: Categorical::uniform(space.stem.activations.len()),
        stages: space
            .stages
            .iter()
            .map(|s| StageDistribution {
                width: Categorical::uniform(s.widths.len()),
                depth: Categorical::uniform(s.depths.len()),
                ffn_type: Categorical::uniform(s.ffn_types.len()),
                ffn_expansion: Categorical::uniform(s.expansions.len()),
                kernel: Categorical::uniform(s.kernels.len()),
                ffn_activation: Categorical::uniform(s.activations.len()),
                attention: s.mhsa.as_ref().map(attention),
            })
            .collect(),
        embeds: space
            .embeds
            .iter()
            .map(|e| match e {
                EmbedChoices::Conv => None,
                EmbedChoices::MhsaDownsample(a) => Some(EmbedDistribution {
                    expansion: Categorical::uniform(a.expansions.len()),
                    activation: Categorical::uniform(a.activations.len()),
                }),
            })
            .collect(),
    }
}

pub(crate) fn sample_attention<R: Rng + ?Sized>(
    choices: &AttentionChoices,
    expansion: &Categorical,
    activation: &Categorical,
    rng: &mut R,
) -> AttentionGene {
    AttentionGene {
        expansion: choices.expansions[expansion.sample(rng)],
        activation: choices.activations[activation.sample(rng)],
    }
}

pub(crate) fn sample_ffn<R: Rng + ?Sized>(
    cs: &ChoiceSet,
    d: &StageDistribution,
    rng: &mut R,
) -> FfnGene {
    FfnGene {
        ffn_type: cs.ffn_types[d.ffn_type.sample(rng)],
        expansion: cs.expansions[d.ffn_expansion.sample(rng)],
        kernel: cs.kernels[d.kernel.sample(rng)],
        activation: cs.activations[d.ffn_activation.sample(rng)],
    }
}

pub(crate) fn sample_presence<R: Rng + ?Sized>(d: &StageDistribution, rng: &mut R) -> bool {
    d.attention
        .as_ref()
        .is_some_and(|a| a.presence.sample(rng) == 1)
}

pub(crate) fn sample_embed<R: Rng + ?Sized>(
    choices: &EmbedChoices,
    d: Option<&EmbedDistribution>,
    rng: &mut R,
) -> EmbedGene {
    match (choices, d) {
        (EmbedChoices::Conv, _) => EmbedGene::Conv,
        (EmbedChoices::MhsaDownsample(a), Some(d)) => {
            EmbedGene::MhsaDownsample(sample_attention(a, &d.expansion, &d.activation, rng))
        }
        (EmbedChoices::MhsaDownsample(_), None) => {
            panic!("distribution lacks the downsampling embedding vectors")
        }
    }
}

/// Draws `depth` slots: MHSA presence for every slot first, then the block
/// choices slot by slot.
pub(crate) fn sample_slots<R: Rng + ?Sized>(
    cs: &ChoiceSet,
    d: &StageDistribution,
    depth: usize,
    rng: &mut R,
) -> Vec<SlotGene> {
    let presence: Vec<bool> = (0..depth).map(|_| sample_presence(d, rng)).collect();
    presence
        .into_iter()
        .map(|has_mhsa| {
            let attention = match (has_mhsa, &cs.mhsa, &d.attention) {
                (true, Some(a), Some(ad)) => {
                    Some(sample_attention(a, &ad.expansion, &ad.activation, rng))
                }
                _ => None,
            };
            SlotGene {
                attention,
                ffn: sample_ffn(cs, d, rng),
            }
        })
        .collect()
}

/// Draws one genome. Order: stem activation, then per stage the embedding
/// feeding it, width, depth, MHSA presence per slot and the block choices.
pub fn sample_genome<R: Rng + ?Sized>(
    space: &SearchSpace,
    dist: &SamplingDistribution,
    rng: &mut R,
) -> Genome {
    let stem_activation = space.stem.activations[dist.stem_activation.sample(rng)];
    let mut stages = Vec::with_capacity(space.stages.len());
    let mut embeds = Vec::with_capacity(space.embeds.len());
    for (s, (cs, d)) in space.stages.iter().zip(&dist.stages).enumerate() {
        if s > 0 {
            embeds.push(sample_embed(
                &space.embeds[s - 1],
                dist.embeds[s - 1].as_ref(),
                rng,
            ));
        }
        let width = cs.widths[d.width.sample(rng)];
        let depth = cs.depths[d.depth.sample(rng)];
        let slots = sample_slots(cs, d, depth, rng);
        stages.push(StageGene { width, slots });
    }
    Genome {
        stem_activation,
        stages,
        embeds,
    }
}

/// Draws one subnet; deterministic in `seed`.
pub fn sample_subnet(space: &SearchSpace, dist: &SamplingDistribution, seed: u64) -> SubnetArch {
    let mut rng = rng_from_seed(seed);
    sample_genome(space, dist, &mut rng).to_arch(space)
}

/// One sandwich-rule training step worth of subnets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub max: SubnetArch,
    pub min: SubnetArch,
    pub rands: Vec<SubnetArch>,
}

fn extreme_genome(
    space: &SearchSpace,
    largest: bool,
    ffn_type: FfnType,
    act: Activation,
) -> Genome {
    fn pick<T: Copy>(xs: &[T], largest: bool) -> T {
        if largest {
            *xs.last().expect("non-empty")
        } else {
            xs[0]
        }
    }
    let pick_act = |acts: &[Activation]| if acts.contains(&act) { act } else { acts[0] };
    let stages = space
        .stages
        .iter()
        .map(|cs| {
            let ffn = FfnGene {
                ffn_type: if cs.ffn_types.contains(&ffn_type) {
                    ffn_type
                } else {
                    cs.ffn_types[0]
                },
                expansion: pick(&cs.expansions, largest),
                kernel: pick(&cs.kernels, largest),
                activation: pick_act(&cs.activations),
            };
            let attention = match (&cs.mhsa, largest) {
                (Some(a), true) => Some(AttentionGene {
                    expansion: pick(&a.expansions, true),
                    activation: pick_act(&a.activations),
                }),
                _ => None,
            };
            StageGene {
                width: pick(&cs.widths, largest),
                slots: vec![SlotGene { attention, ffn }; pick(&cs.depths, largest)],
            }
        })
        .collect();
    let embeds = space
        .embeds
        .iter()
        .map(|e| match e {
            EmbedChoices::Conv => EmbedGene::Conv,
            EmbedChoices::MhsaDownsample(a) => EmbedGene::MhsaDownsample(AttentionGene {
                expansion: pick(&a.expansions, largest),
                activation: pick_act(&a.activations),
            }),
        })
        .collect();
    Genome {
        stem_activation: pick_act(&space.stem.activations),
        stages,
        embeds,
    }
}

fn union_ffn_types(space: &SearchSpace) -> Vec<FfnType> {
    [FfnType::Fused, FfnType::Unified]
        .into_iter()
        .filter(|t| space.stages.iter().any(|s| s.ffn_types.contains(t)))
        .collect()
}

fn union_activations(space: &SearchSpace) -> Vec<Activation> {
    [Activation::Gelu, Activation::Relu]
        .into_iter()
        .filter(|a| space.stages.iter().any(|s| s.activations.contains(a)))
        .collect()
}

/// Samples the largest subnet, the smallest subnet and `m` random subnets.
///
/// The largest and smallest subnets each use one FFN type (and one
/// activation) drawn for the whole network; the random subnets draw every
/// block independently from the uniform distribution.
pub fn sample_sandwich(space: &SearchSpace, seed: u64, m: usize) -> Sandwich {
    let mut rng = rng_from_seed(seed);
    let types = union_ffn_types(space);
    let acts = union_activations(space);
    let max_type = types[rng.random_range(0..types.len())];
    let min_type = types[rng.random_range(0..types.len())];
    let max_act = acts[rng.random_range(0..acts.len())];
    let min_act = acts[rng.random_range(0..acts.len())];
    let uniform = init_uniform_distribution(space);
    let rands = (0..m)
        .map(|_| sample_genome(space, &uniform, &mut rng).to_arch(space))
        .collect();
    Sandwich {
        max: extreme_genome(space, true, max_type, max_act).to_arch(space),
        min: extreme_genome(space, false, min_type, min_act).to_arch(space),
        rands,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_default_space, validate};
    use crate::subnet::BlockKind;

    #[test]
    fn uniform_vectors() {
        let d = init_uniform_distribution(&build_default_space());
        assert_eq!(d.stages[0].kernel.0, vec![0.5, 0.5]);
        for p in &d.stages[2].ffn_expansion.0 {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        d.check(1e-12).unwrap();
    }

    #[test]
    fn same_seed_same_subnet() {
        let s = build_default_space();
        let d = init_uniform_distribution(&s);
        assert_eq!(sample_subnet(&s, &d, 42), sample_subnet(&s, &d, 42));
        assert_ne!(sample_subnet(&s, &d, 42), sample_subnet(&s, &d, 43));
    }

    #[test]
    fn zero_mass_is_never_sampled() {
        let s = build_default_space();
        let mut d = init_uniform_distribution(&s);
        for st in &mut d.stages {
            st.ffn_type = Categorical(vec![0.0, 1.0]);
        }
        for seed in 0..200 {
            let a = sample_subnet(&s, &d, seed);
            assert_eq!(a.count_kind(BlockKind::FusedFfn), 0);
        }
    }

    #[test]
    fn point_mass_reproduces_subnet() {
        let s = build_default_space();
        let sw = sample_sandwich(&s, 3, 0);
        let g = Genome::from_arch(&s, &sw.max).unwrap();
        let d = SamplingDistribution::point_mass(&s, &g);
        for seed in 0..20 {
            assert_eq!(sample_subnet(&s, &d, seed), sw.max);
        }
    }

    #[test]
    fn sandwich_extremes_match_space_bounds() {
        let s = build_default_space();
        let sw = sample_sandwich(&s, 11, 2);
        assert_eq!(sw.rands.len(), 2);
        let max = Genome::from_arch(&s, &sw.max).unwrap();
        let min = Genome::from_arch(&s, &sw.min).unwrap();
        let depths = |g: &Genome| g.stages.iter().map(|s| s.depth()).collect::<Vec<_>>();
        assert_eq!(depths(&max), vec![3, 3, 9, 6]);
        assert_eq!(depths(&min), vec![2, 2, 6, 4]);
        assert_eq!(max.stages[2].mhsa_count(), 9);
        assert_eq!(max.stages[3].mhsa_count(), 6);
        assert_eq!(min.mhsa_count(), 0);
        assert_eq!(sw.min.count_kind(BlockKind::MhsaDownsample), 1);
        let widths = |g: &Genome| g.stages.iter().map(|s| s.width).collect::<Vec<_>>();
        assert_eq!(widths(&max), vec![36, 64, 132, 248]);
        assert_eq!(widths(&min), vec![24, 40, 96, 176]);
        for a in [&sw.max, &sw.min].into_iter().chain(&sw.rands) {
            validate(&s, a).unwrap();
        }
    }

    #[test]
    fn floor_keeps_sum() {
        let mut c = Categorical(vec![1.0, 0.0, 0.0]);
        c.apply_floor(1e-3);
        assert!((c.sum() - 1.0).abs() < 1e-12);
        assert!(c.0.iter().all(|&p| p > 0.0));
    }
}
