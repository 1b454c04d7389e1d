//! JSON overrides for the search space. Every omitted field falls back to the
//! default space at the same stage / embedding position.

use super::{
    build_default_space, width_range, AttentionChoices, ChoiceSet, EmbedChoices, SearchSpace,
    SpaceError, StemChoices,
};
use crate::subnet::{Activation, FfnType};
use serde::{Deserialize, Serialize};

pub const SPACE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_resolution: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<StemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeds: Option<Vec<EmbedSpec>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Activation>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    /// `(min, max, step)`, as in the width column of the space table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<(u32, u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffn_types: Option<Vec<FfnType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansions: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Activation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mhsa: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mhsa_expansions: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mhsa_activations: Option<Vec<Activation>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSpec {
    /// `"conv"` or `"mhsa_downsample"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansions: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Activation>>,
}

fn default_attention() -> AttentionChoices {
    AttentionChoices {
        expansions: vec![2, 3, 4],
        activations: vec![Activation::Gelu, Activation::Relu],
    }
}

impl StageSpec {
    fn build(&self, base: Option<&ChoiceSet>, index: usize) -> Result<ChoiceSet, SpaceError> {
        let missing = |field: &str| {
            SpaceError::Invalid(format!(
                "stage {} has no default; field `{field}` is required",
                index + 1
            ))
        };
        let widths = match (self.widths, base) {
            (Some((min, max, step)), _) => {
                if min > max {
                    return Err(SpaceError::Invalid(format!(
                        "stage {} width range ({min}, {max}, {step}) is empty",
                        index + 1
                    )));
                }
                width_range(min, max, step)
            }
            (None, Some(b)) => b.widths.clone(),
            (None, None) => return Err(missing("widths")),
        };
        let depths = match (&self.depths, base) {
            (Some(d), _) => d.clone(),
            (None, Some(b)) => b.depths.clone(),
            (None, None) => return Err(missing("depths")),
        };
        let pick = |v: &Option<Vec<u32>>, d: fn(&ChoiceSet) -> &Vec<u32>, fallback: Vec<u32>| {
            v.clone()
                .or_else(|| base.map(|b| d(b).clone()))
                .unwrap_or(fallback)
        };
        let expansions = pick(&self.expansions, |b| &b.expansions, vec![2, 3, 4]);
        let kernels = pick(&self.kernels, |b| &b.kernels, vec![3, 5]);
        let ffn_types = self
            .ffn_types
            .clone()
            .or_else(|| base.map(|b| b.ffn_types.clone()))
            .unwrap_or_else(|| vec![FfnType::Fused, FfnType::Unified]);
        let activations = self
            .activations
            .clone()
            .or_else(|| base.map(|b| b.activations.clone()))
            .unwrap_or_else(|| vec![Activation::Gelu, Activation::Relu]);
        let base_mhsa = base.and_then(|b| b.mhsa.clone());
        let mhsa_on = self.mhsa.unwrap_or(base_mhsa.is_some());
        let mhsa = if mhsa_on {
            let d = base_mhsa.unwrap_or_else(default_attention);
            Some(AttentionChoices {
                expansions: self.mhsa_expansions.clone().unwrap_or(d.expansions),
                activations: self.mhsa_activations.clone().unwrap_or(d.activations),
            })
        } else {
            None
        };
        Ok(ChoiceSet {
            widths,
            depths,
            ffn_types,
            expansions,
            kernels,
            activations,
            mhsa,
        })
    }
}

impl EmbedSpec {
    fn build(&self, base: Option<&EmbedChoices>) -> Result<EmbedChoices, SpaceError> {
        match self.kind.as_str() {
            "conv" => Ok(EmbedChoices::Conv),
            "mhsa_downsample" => {
                let d = match base {
                    Some(EmbedChoices::MhsaDownsample(a)) => a.clone(),
                    _ => default_attention(),
                };
                Ok(EmbedChoices::MhsaDownsample(AttentionChoices {
                    expansions: self.expansions.clone().unwrap_or(d.expansions),
                    activations: self.activations.clone().unwrap_or(d.activations),
                }))
            }
            other => Err(SpaceError::Invalid(format!("unknown embed kind `{other}`"))),
        }
    }
}

impl SpaceSpec {
    /// Resolves the overrides against the default space and validates.
    pub fn build(&self) -> Result<SearchSpace, SpaceError> {
        if let Some(v) = self.format_version {
            if v != SPACE_FORMAT_VERSION {
                return Err(SpaceError::Invalid(format!(
                    "unsupported space format_version {v}"
                )));
            }
        }
        let default = build_default_space();
        let stages = match &self.stages {
            None => default.stages.clone(),
            Some(specs) => specs
                .iter()
                .enumerate()
                .map(|(i, s)| s.build(default.stages.get(i), i))
                .collect::<Result<Vec<_>, _>>()?,
        };
        let embeds = match &self.embeds {
            Some(specs) => specs
                .iter()
                .enumerate()
                .map(|(i, e)| e.build(default.embeds.get(i)))
                .collect::<Result<Vec<_>, _>>()?,
            None => (0..stages.len().saturating_sub(1))
                .map(|i| default.embeds.get(i).cloned().unwrap_or(EmbedChoices::Conv))
                .collect(),
        };
        let space = SearchSpace {
            input_resolution: self.input_resolution.unwrap_or(default.input_resolution),
            num_classes: self.num_classes.unwrap_or(default.num_classes),
            stem: StemChoices {
                activations: self
                    .stem
                    .as_ref()
                    .and_then(|s| s.activations.clone())
                    .unwrap_or(default.stem.activations),
            },
            stages,
            embeds,
        };
        space.check()?;
        Ok(space)
    }
}
