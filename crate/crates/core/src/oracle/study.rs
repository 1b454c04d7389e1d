//! Ready-made experiments on top of the synthetic devices.

use super::{
    device_info, generate_lut_measurements, AccuracyOracle, DeviceProfile, SyntheticDevice,
};
use crate::evolution::{
    search, Constraint, ConstraintSet, LatencyEstimator, Metric, SearchConfig, SearchError,
};
use crate::latency::{build_lut, BuildOptions, CalibrationPair, CalibrationParams, LatencyError};
use crate::space::{init_uniform_distribution, sample_subnet, SearchSpace};
use crate::{rng_for, rng_from_seed};
use serde::{Deserialize, Serialize};

/// Noise-free table for `profile` with identity calibration.
pub fn synthetic_estimator(
    space: &SearchSpace,
    profile: &DeviceProfile,
) -> Result<LatencyEstimator, LatencyError> {
    let m = generate_lut_measurements(space, profile, 1, 0.0, &mut rng_from_seed(0));
    let lut = build_lut(&m, device_info(profile), space, BuildOptions::default())?.lut;
    Ok(LatencyEstimator {
        lut,
        calib: CalibrationParams::identity(),
    })
}

/// Estimated latency at quantile `q` of `n` uniform subnets drawn with
/// seeds `first_seed..first_seed + n`.
pub fn latency_quantile(
    space: &SearchSpace,
    est: &LatencyEstimator,
    n: usize,
    q: f64,
    first_seed: u64,
) -> Result<f64, LatencyError> {
    if n == 0 {
        return Err(LatencyError::TooFew { need: 1, got: 0 });
    }
    let dist = init_uniform_distribution(space);
    let mut lats = (0..n as u64)
        .map(|i| est.estimate(&sample_subnet(space, &dist, first_seed + i)))
        .collect::<Result<Vec<_>, _>>()?;
    lats.sort_by(f64::total_cmp);
    let at = ((q.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
    Ok(lats[at])
}

/// End-to-end measurements of `n` uniform subnets on `device`.
pub fn calibration_pairs(
    space: &SearchSpace,
    device: &SyntheticDevice,
    n: usize,
    seed: u64,
) -> Vec<CalibrationPair> {
    let dist = init_uniform_distribution(space);
    (0..n as u64)
        .map(|i| {
            let subnet = sample_subnet(space, &dist, seed.wrapping_add(i));
            let mut rng = rng_for(seed, u64::MAX, i);
            let measured_ms = device.measure(&subnet, &mut rng);
            CalibrationPair {
                subnet,
                measured_ms,
            }
        })
        .collect()
}

/// Paired searches on an attention-hostile and an attention-friendly variant
/// of one profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptStudy {
    pub base: DeviceProfile,
    /// The hostile profile multiplies the attention cost by this factor and
    /// the friendly one divides it.
    pub factor: f64,
    pub seeds: Vec<u64>,
    /// The latency bound is this quantile of uniform samples on each profile.
    pub quantile: f64,
    pub bound_samples: usize,
    pub search: SearchConfig,
    pub oracle: AccuracyOracle,
}

impl Default for AdaptStudy {
    fn default() -> Self {
        AdaptStudy {
            base: super::make_standard_profiles().gpu_like,
            factor: 10.0,
            seeds: (0..10).collect(),
            quantile: 0.2,
            bound_samples: 2000,
            search: SearchConfig {
                total_gen: 30,
                ..SearchConfig::default()
            },
            oracle: AccuracyOracle::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptRow {
    pub seed: u64,
    pub hostile_mhsa: usize,
    pub friendly_mhsa: usize,
    pub hostile_accuracy: f64,
    pub friendly_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub hostile_bound_ms: f64,
    pub friendly_bound_ms: f64,
    pub rows: Vec<AdaptRow>,
}

impl AdaptReport {
    /// Seeds where the hostile profile ends with strictly fewer MHSA blocks.
    pub fn hostile_fewer(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.hostile_mhsa < r.friendly_mhsa)
            .count()
    }

    pub fn majority(&self) -> bool {
        2 * self.hostile_fewer() > self.rows.len()
    }

    pub fn csv(&self) -> String {
        let mut s =
            String::from("seed,hostile_mhsa,friendly_mhsa,hostile_accuracy,friendly_accuracy\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.seed, r.hostile_mhsa, r.friendly_mhsa, r.hostile_accuracy, r.friendly_accuracy
            ));
        }
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("invalid profile: {0}")]
    Profile(String),
}

const BOUND_SEED_OFFSET: u64 = 10_000;

pub fn adapt_study(space: &SearchSpace, study: &AdaptStudy) -> Result<AdaptReport, StudyError> {
    study.base.check().map_err(StudyError::Profile)?;
    if !(study.factor > 0.0) {
        return Err(StudyError::Profile(format!(
            "factor {} must be positive",
            study.factor
        )));
    }
    let f = study.base.attention_factor;
    let hostile = study
        .base
        .with_attention_factor("attention_hostile", f * study.factor);
    let friendly = study
        .base
        .with_attention_factor("attention_friendly", f / study.factor);
    let mut sets = Vec::new();
    let mut bounds = Vec::new();
    for p in [&hostile, &friendly] {
        let est = synthetic_estimator(space, p)?;
        let bound = latency_quantile(
            space,
            &est,
            study.bound_samples,
            study.quantile,
            BOUND_SEED_OFFSET,
        )?;
        bounds.push(bound);
        sets.push(
            ConstraintSet::new(
                vec![Constraint {
                    metric: Metric::LatencyMs,
                    bound,
                }],
                Some(est),
            )
            .expect("single latency bound with a table"),
        );
    }
    let mut rows = Vec::with_capacity(study.seeds.len());
    for &seed in &study.seeds {
        let cfg = SearchConfig {
            seed,
            ..study.search.clone()
        };
        let h = search(space, &cfg, &sets[0], &study.oracle)?;
        let fr = search(space, &cfg, &sets[1], &study.oracle)?;
        rows.push(AdaptRow {
            seed,
            hostile_mhsa: h.best.arch.mhsa_count(),
            friendly_mhsa: fr.best.arch.mhsa_count(),
            hostile_accuracy: h.best.predicted,
            friendly_accuracy: fr.best.predicted,
        });
    }
    Ok(AdaptReport {
        hostile_bound_ms: bounds[0],
        friendly_bound_ms: bounds[1],
        rows,
    })
}
