//! Block latency lookup tables, linear calibration and end-to-end latency
//! estimation.

use crate::space::{lut_keys, SearchSpace};
use crate::stats::{self, StatsError};
use crate::subnet::{count_flops, count_params, BlockKey, SubnetArch};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const LUT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LatencyError {
    #[error("no measurements supplied")]
    Empty,
    #[error("non-positive latency {value} ms for {key}")]
    NonPositiveLatency { key: BlockKey, value: f64 },
    #[error("{} blocks of the space have no measurement, first: {}", .0.len(), .0[0])]
    MissingBlocks(Vec<BlockKey>),
    #[error("block {0} is not in the latency table")]
    UnknownBlock(BlockKey),
    #[error("calibration needs distinct uncalibrated sums")]
    DegenerateFit,
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error(transparent)]
    Stats(StatsError),
    #[error("unsupported latency table format_version {0}")]
    Version(u32),
    #[error("invalid latency JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<StatsError> for LatencyError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Degenerate => LatencyError::DegenerateFit,
            StatsError::TooFew { need, got } => LatencyError::TooFew { need, got },
            other => LatencyError::Stats(other),
        }
    }
}

/// One measured block: the key fields plus the latency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    #[serde(flatten)]
    pub key: BlockKey,
    pub latency_ms: f64,
}

/// Device metadata attached to a table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub device: String,
    #[serde(default)]
    pub compiler: String,
    #[serde(default)]
    pub precision: String,
}

/// On-disk form shared by raw measurement files and built tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LutDocument {
    pub format_version: u32,
    #[serde(flatten)]
    pub info: DeviceInfo,
    pub entries: Vec<Measurement>,
}

impl LutDocument {
    pub fn from_json(text: &str) -> Result<Self, LatencyError> {
        let doc: LutDocument = serde_json::from_str(text)?;
        if doc.format_version != LUT_FORMAT_VERSION {
            return Err(LatencyError::Version(doc.format_version));
        }
        Ok(doc)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("latency document serializes")
    }
}

/// Block key to latency (ms).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatencyLut {
    pub info: DeviceInfo,
    pub table: BTreeMap<BlockKey, f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub aggregation: Aggregation,
    /// Return a partial table instead of failing on uncovered keys.
    pub allow_missing: bool,
}

/// A built table plus the keys of the space it does not cover.
#[derive(Clone, Debug, PartialEq)]
pub struct LutBuild {
    pub lut: LatencyLut,
    pub missing: Vec<BlockKey>,
}

fn aggregate(values: &mut [f64], how: Aggregation) -> f64 {
    match how {
        Aggregation::Mean => stats::mean(values),
        Aggregation::Median => {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            }
        }
    }
}

/// Builds a table from raw measurements. Repeated keys are aggregated.
/// Keys of `space` without a measurement are an error unless
/// `opts.allow_missing` is set.
pub fn build_lut(
    measurements: &[Measurement],
    info: DeviceInfo,
    space: &SearchSpace,
    opts: BuildOptions,
) -> Result<LutBuild, LatencyError> {
    if measurements.is_empty() {
        return Err(LatencyError::Empty);
    }
    let mut grouped: BTreeMap<BlockKey, Vec<f64>> = BTreeMap::new();
    for m in measurements {
        if !(m.latency_ms > 0.0) || !m.latency_ms.is_finite() {
            return Err(LatencyError::NonPositiveLatency {
                key: m.key,
                value: m.latency_ms,
            });
        }
        grouped.entry(m.key).or_default().push(m.latency_ms);
    }
    let table: BTreeMap<BlockKey, f64> = grouped
        .into_iter()
        .map(|(k, mut v)| (k, aggregate(&mut v, opts.aggregation)))
        .collect();
    let missing: Vec<BlockKey> = lut_keys(space)
        .into_iter()
        .filter(|k| !table.contains_key(k))
        .collect();
    if !missing.is_empty() && !opts.allow_missing {
        return Err(LatencyError::MissingBlocks(missing));
    }
    Ok(LutBuild {
        lut: LatencyLut { info, table },
        missing,
    })
}

impl LatencyLut {
    pub fn get(&self, key: &BlockKey) -> Option<f64> {
        self.table.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn to_document(&self) -> LutDocument {
        LutDocument {
            format_version: LUT_FORMAT_VERSION,
            info: self.info.clone(),
            entries: self
                .table
                .iter()
                .map(|(k, &v)| Measurement {
                    key: *k,
                    latency_ms: v,
                })
                .collect(),
        }
    }

    /// Loads a built table; repeated keys are averaged, coverage is not
    /// checked.
    pub fn from_document(doc: LutDocument) -> Result<Self, LatencyError> {
        let mut grouped: BTreeMap<BlockKey, Vec<f64>> = BTreeMap::new();
        for m in doc.entries {
            if !(m.latency_ms > 0.0) {
                return Err(LatencyError::NonPositiveLatency {
                    key: m.key,
                    value: m.latency_ms,
                });
            }
            grouped.entry(m.key).or_default().push(m.latency_ms);
        }
        Ok(LatencyLut {
            info: doc.info,
            table: grouped
                .into_iter()
                .map(|(k, v)| (k, stats::mean(&v)))
                .collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LatencyError> {
        Self::from_document(LutDocument::from_json(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        self.to_document().to_json_pretty()
    }
}

/// Sum of the table latencies of every block, output head included.
pub fn estimate_uncalibrated(lut: &LatencyLut, arch: &SubnetArch) -> Result<f64, LatencyError> {
    arch.blocks.iter().try_fold(0.0, |acc, b| {
        let key = b.key();
        lut.get(&key)
            .map(|v| acc + v)
            .ok_or(LatencyError::UnknownBlock(key))
    })
}

/// Linear correction `kappa * sum + epsilon` with fit diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub format_version: u32,
    pub kappa: f64,
    pub epsilon: f64,
    /// Residual RMSE on the fitting pairs (ms).
    pub rmse_ms: f64,
    pub spearman: f64,
    pub n_pairs: usize,
}

impl CalibrationParams {
    /// Pass-through calibration.
    pub fn identity() -> Self {
        CalibrationParams {
            format_version: LUT_FORMAT_VERSION,
            kappa: 1.0,
            epsilon: 0.0,
            rmse_ms: 0.0,
            spearman: 1.0,
            n_pairs: 0,
        }
    }

    pub fn with(kappa: f64, epsilon: f64) -> Self {
        CalibrationParams {
            kappa,
            epsilon,
            ..Self::identity()
        }
    }

    /// A non-positive scale reverses or flattens the ranking of the table;
    /// callers should warn.
    pub fn is_sane(&self) -> bool {
        self.kappa > 0.0
    }

    pub fn apply(&self, sum: f64) -> f64 {
        self.kappa * sum + self.epsilon
    }
}

/// One end-to-end measurement used for calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub subnet: SubnetArch,
    pub measured_ms: f64,
}

/// Ordinary least squares of measured latency on the uncalibrated sums.
pub fn calibrate(
    lut: &LatencyLut,
    pairs: &[CalibrationPair],
) -> Result<CalibrationParams, LatencyError> {
    if pairs.len() < 2 {
        return Err(LatencyError::TooFew {
            need: 2,
            got: pairs.len(),
        });
    }
    let sums = pairs
        .iter()
        .map(|p| estimate_uncalibrated(lut, &p.subnet))
        .collect::<Result<Vec<_>, _>>()?;
    let measured: Vec<f64> = pairs.iter().map(|p| p.measured_ms).collect();
    calibrate_sums(&sums, &measured)
}

/// [`calibrate`] on precomputed sums.
pub fn calibrate_sums(sums: &[f64], measured: &[f64]) -> Result<CalibrationParams, LatencyError> {
    let (kappa, epsilon) = stats::ols(sums, measured)?;
    let fitted: Vec<f64> = sums.iter().map(|s| kappa * s + epsilon).collect();
    Ok(CalibrationParams {
        format_version: LUT_FORMAT_VERSION,
        kappa,
        epsilon,
        rmse_ms: stats::rmse(&fitted, measured),
        spearman: stats::spearman(&fitted, measured)?,
        n_pairs: sums.len(),
    })
}

/// Calibrated end-to-end latency.
pub fn estimate(
    lut: &LatencyLut,
    calib: &CalibrationParams,
    arch: &SubnetArch,
) -> Result<f64, LatencyError> {
    Ok(calib.apply(estimate_uncalibrated(lut, arch)?))
}

pub use crate::stats::spearman;

/// Agreement of one latency proxy with ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub predictor: String,
    pub spearman: f64,
    /// For FLOPs and params the proxy is first mapped to milliseconds by a
    /// least-squares line against the truth.
    pub rmse_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub predictor: String,
    /// Proxy value in its own unit.
    pub x: f64,
    /// Ground-truth latency (ms).
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyReport {
    pub rows: Vec<ProxyRow>,
    pub scatter: Vec<ScatterPoint>,
}

/// Compares the calibrated table, FLOPs and parameter count as predictors
/// of measured latency. The table row is always first.
pub fn proxy_report(
    archs: &[SubnetArch],
    lut: &LatencyLut,
    calib: &CalibrationParams,
    truth_ms: &[f64],
) -> Result<ProxyReport, LatencyError> {
    if archs.len() != truth_ms.len() {
        return Err(LatencyError::Stats(StatsError::LengthMismatch(
            archs.len(),
            truth_ms.len(),
        )));
    }
    if archs.len() < 10 {
        return Err(LatencyError::TooFew {
            need: 10,
            got: archs.len(),
        });
    }
    let est = archs
        .iter()
        .map(|a| estimate(lut, calib, a))
        .collect::<Result<Vec<_>, _>>()?;
    let flops: Vec<f64> = archs.iter().map(|a| count_flops(a) as f64).collect();
    let params: Vec<f64> = archs.iter().map(|a| count_params(a) as f64).collect();
    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    for (name, xs, rescale) in [
        ("lut", &est, false),
        ("flops", &flops, true),
        ("params", &params, true),
    ] {
        let mapped: Vec<f64> = if rescale {
            match stats::ols(xs, truth_ms) {
                Ok((a, b)) => xs.iter().map(|x| a * x + b).collect(),
                Err(_) => vec![stats::mean(truth_ms); xs.len()],
            }
        } else {
            xs.clone()
        };
        rows.push(ProxyRow {
            predictor: name.to_string(),
            spearman: stats::spearman(xs, truth_ms)?,
            rmse_ms: stats::rmse(&mapped, truth_ms),
        });
        scatter.extend(xs.iter().zip(truth_ms).map(|(&x, &y)| ScatterPoint {
            predictor: name.to_string(),
            x,
            y,
        }));
    }
    Ok(ProxyReport { rows, scatter })
}
