//! The configurable hybrid CNN/attention search space.
//!
//! A space is a stem, up to four stages and one embedding layer between
//! consecutive stages. Every stage carries its own choice sets; stages that
//! allow self-attention may place one MHSA block in front of any FFN slot.

mod distribution;
mod enumerate;
mod genome;
mod lut_blocks;
mod spec;
mod validate;

pub use distribution::{
    init_uniform_distribution, sample_genome, sample_sandwich, sample_subnet,
    AttentionDistribution, Categorical, DistributionError, EmbedDistribution, SamplingDistribution,
    Sandwich, StageDistribution,
};
pub(crate) use distribution::{
    sample_attention, sample_embed, sample_ffn, sample_presence, sample_slots,
};
pub use enumerate::{enumerate_genomes, enumerate_subnets, SubnetStream};
pub use genome::{AttentionGene, EmbedGene, FfnGene, Genome, SlotGene, StageGene};
pub use lut_blocks::{
    enumerate_head_blocks, enumerate_lut_blocks, lut_census, lut_keys, CensusRow,
};
pub use spec::{EmbedSpec, SpaceSpec, StageSpec, StemSpec, SPACE_FORMAT_VERSION};
pub use validate::{validate, Violation};

use crate::subnet::{Activation, FfnType, ENCODING_ROWS};
use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("invalid search space: {0}")]
    Invalid(String),
    #[error("space holds {count} subnets, more than the cap of {cap}")]
    SpaceTooLarge { count: BigUint, cap: u64 },
    #[error("invalid space JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Searchable expansion ratios and activations of a self-attention block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionChoices {
    pub expansions: Vec<u32>,
    pub activations: Vec<Activation>,
}

impl AttentionChoices {
    /// Number of distinct attention blocks at a fixed width.
    pub fn len(&self) -> usize {
        self.expansions.len() * self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Choice sets of one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub widths: Vec<u32>,
    /// Permitted FFN block counts.
    pub depths: Vec<usize>,
    pub ffn_types: Vec<FfnType>,
    pub expansions: Vec<u32>,
    pub kernels: Vec<u32>,
    pub activations: Vec<Activation>,
    /// `Some` when an MHSA block may precede any FFN slot of the stage.
    pub mhsa: Option<AttentionChoices>,
}

impl ChoiceSet {
    /// Distinct FFN blocks at a fixed width.
    pub fn ffn_choices(&self) -> usize {
        self.ffn_types.len() * self.expansions.len() * self.kernels.len() * self.activations.len()
    }

    /// Distinct MHSA blocks at a fixed width (0 when attention is disallowed).
    pub fn mhsa_choices(&self) -> usize {
        self.mhsa.as_ref().map_or(0, AttentionChoices::len)
    }

    pub fn max_depth(&self) -> usize {
        *self.depths.last().expect("validated space has depths")
    }

    pub fn min_depth(&self) -> usize {
        self.depths[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedChoices {
    /// Stride-2 3x3 convolution, no searchable options.
    Conv,
    /// Attention-based downsampling with searchable V expansion and activation.
    MhsaDownsample(AttentionChoices),
}

impl EmbedChoices {
    pub fn choices(&self) -> usize {
        match self {
            EmbedChoices::Conv => 1,
            EmbedChoices::MhsaDownsample(a) => a.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemChoices {
    pub activations: Vec<Activation>,
}

/// The full sample space. Immutable once validated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub input_resolution: u32,
    pub num_classes: u32,
    pub stem: StemChoices,
    pub stages: Vec<ChoiceSet>,
    /// `embeds[i]` sits between `stages[i]` and `stages[i + 1]`.
    pub embeds: Vec<EmbedChoices>,
}

pub const MAX_STAGES: usize = 4;
pub const MAX_WIDTH_CHOICES: usize = 4;
pub const MAX_EXPANSION_CHOICES: usize = 3;
pub const MAX_BINARY_CHOICES: usize = 2;

/// Expands a `(min, max, step)` width triple.
pub fn width_range(min: u32, max: u32, step: u32) -> Vec<u32> {
    if step == 0 {
        return vec![min];
    }
    (min..=max).step_by(step as usize).collect()
}

/// The default hybrid space: four stages, conv embeddings, MHSA in the last
/// two stages and attention downsampling into the last stage.
pub fn build_default_space() -> SearchSpace {
    let both = vec![Activation::Gelu, Activation::Relu];
    let attention = AttentionChoices {
        expansions: vec![2, 3, 4],
        activations: both.clone(),
    };
    let stage = |widths: Vec<u32>, depths: Vec<usize>, mhsa: bool| ChoiceSet {
        widths,
        depths,
        ffn_types: vec![FfnType::Fused, FfnType::Unified],
        expansions: vec![2, 3, 4],
        kernels: vec![3, 5],
        activations: both.clone(),
        mhsa: mhsa.then(|| attention.clone()),
    };
    SearchSpace {
        input_resolution: 224,
        num_classes: 1000,
        stem: StemChoices {
            activations: both.clone(),
        },
        stages: vec![
            stage(width_range(24, 36, 4), vec![2, 3], false),
            stage(width_range(40, 64, 8), vec![2, 3], false),
            stage(width_range(96, 132, 12), vec![6, 7, 8, 9], true),
            stage(width_range(176, 248, 24), vec![4, 5, 6], true),
        ],
        embeds: vec![
            EmbedChoices::Conv,
            EmbedChoices::Conv,
            EmbedChoices::MhsaDownsample(attention),
        ],
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        build_default_space()
    }
}

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        let spec: SpaceSpec = serde_json::from_str(text)?;
        spec.build()
    }

    /// Output resolution of stage `stage` (input/4, /8, /16, /32).
    pub fn stage_resolution(&self, stage: usize) -> u32 {
        self.input_resolution / (4 << stage)
    }

    pub fn last_stage(&self) -> usize {
        self.stages.len() - 1
    }

    /// Block count of the largest subnet, output head included.
    pub fn max_block_count(&self) -> usize {
        let stage_blocks: usize = self
            .stages
            .iter()
            .map(|s| s.max_depth() * if s.mhsa.is_some() { 2 } else { 1 })
            .sum();
        1 + stage_blocks + self.embeds.len() + 1
    }

    /// Checks every structural requirement, including the limits imposed by
    /// the fixed-width binary encoding.
    pub fn check(&self) -> Result<(), SpaceError> {
        let fail = |msg: String| Err(SpaceError::Invalid(msg));
        if self.stages.is_empty() || self.stages.len() > MAX_STAGES {
            return fail(format!(
                "expected 1..={MAX_STAGES} stages, got {}",
                self.stages.len()
            ));
        }
        if self.embeds.len() + 1 != self.stages.len() {
            return fail(format!(
                "{} stages need {} embedding layers, got {}",
                self.stages.len(),
                self.stages.len() - 1,
                self.embeds.len()
            ));
        }
        let div = 4u32 << self.last_stage();
        if self.input_resolution == 0 || !self.input_resolution.is_multiple_of(div) {
            return fail(format!(
                "input resolution {} is not divisible by {div}",
                self.input_resolution
            ));
        }
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        check_set(
            "stem activations",
            &self.stem.activations,
            MAX_BINARY_CHOICES,
        )?;
        for (i, s) in self.stages.iter().enumerate() {
            let name = |f: &str| format!("stage {} {f}", i + 1);
            check_increasing(&name("widths"), &s.widths, MAX_WIDTH_CHOICES)?;
            if s.widths[0] == 0 {
                return fail(name("widths must be positive"));
            }
            check_increasing(&name("depths"), &s.depths, usize::MAX)?;
            if s.depths[0] == 0 {
                return fail(name("depths must be positive"));
            }
            check_set(&name("ffn types"), &s.ffn_types, MAX_BINARY_CHOICES)?;
            check_increasing(&name("expansions"), &s.expansions, MAX_EXPANSION_CHOICES)?;
            check_increasing(&name("kernels"), &s.kernels, MAX_BINARY_CHOICES)?;
            if s.expansions[0] == 0 || s.kernels[0] == 0 {
                return fail(name("expansions and kernels must be positive"));
            }
            check_set(&name("activations"), &s.activations, MAX_BINARY_CHOICES)?;
            if let Some(a) = &s.mhsa {
                check_attention(&name("mhsa"), a)?;
            }
        }
        for (i, e) in self.embeds.iter().enumerate() {
            if let EmbedChoices::MhsaDownsample(a) = e {
                check_attention(&format!("embed {}", i + 1), a)?;
            }
        }
        if self.max_block_count() > ENCODING_ROWS {
            return fail(format!(
                "largest subnet has {} blocks, encoding holds {ENCODING_ROWS}",
                self.max_block_count()
            ));
        }
        Ok(())
    }

    /// Exact number of distinct subnets.
    ///
    /// Per stage the count is `|widths| * sum_n f^n (1 + m)^n` where `f` is
    /// the number of FFN blocks and `m` the number of MHSA blocks; the
    /// `(1 + m)^n` factor is `sum_j m^j C(n, j)`, i.e. every subset of the
    /// `n` slots carrying attention.
    pub fn count_subnets(&self) -> BigUint {
        let mut total = BigUint::from(self.stem.activations.len());
        for s in &self.stages {
            let per_slot = BigUint::from(s.ffn_choices() * (1 + s.mhsa_choices()));
            let mut stage_sum = BigUint::zero();
            for &n in &s.depths {
                stage_sum += num_traits::pow::pow(per_slot.clone(), n);
            }
            total *= BigUint::from(s.widths.len()) * stage_sum;
        }
        for e in &self.embeds {
            total *= BigUint::from(e.choices());
        }
        total
    }
}

/// Free-function form of [`SearchSpace::count_subnets`].
pub fn count_subnets(space: &SearchSpace) -> BigUint {
    space.count_subnets()
}

fn check_set<T: PartialEq + std::fmt::Debug>(
    name: &str,
    items: &[T],
    max: usize,
) -> Result<(), SpaceError> {
    if items.is_empty() {
        return Err(SpaceError::Invalid(format!("{name} must not be empty")));
    }
    if items.len() > max {
        return Err(SpaceError::Invalid(format!(
            "{name} has {} options, at most {max} are encodable",
            items.len()
        )));
    }
    for (i, a) in items.iter().enumerate() {
        if items[..i].contains(a) {
            return Err(SpaceError::Invalid(format!("{name} repeats {a:?}")));
        }
    }
    Ok(())
}

fn check_increasing<T: PartialOrd + std::fmt::Debug>(
    name: &str,
    items: &[T],
    max: usize,
) -> Result<(), SpaceError> {
    check_set(name, items, max)?;
    if items.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpaceError::Invalid(format!(
            "{name} must be strictly increasing, got {items:?}"
        )));
    }
    Ok(())
}

fn check_attention(name: &str, a: &AttentionChoices) -> Result<(), SpaceError> {
    check_increasing(
        &format!("{name} expansions"),
        &a.expansions,
        MAX_EXPANSION_CHOICES,
    )?;
    if a.expansions[0] == 0 {
        return Err(SpaceError::Invalid(format!(
            "{name} expansions must be positive"
        )));
    }
    check_set(
        &format!("{name} activations"),
        &a.activations,
        MAX_BINARY_CHOICES,
    )
}
