//! File formats owned by the command line and loaders shared by commands.

use crate::run::Run;
use anyhow::{bail, Context, Result};
use hwnas_core::evolution::{Constraint, ConstraintSet, LatencyEstimator, Metrics};
use hwnas_core::latency::{CalibrationPair, CalibrationParams, LatencyLut, LUT_FORMAT_VERSION};
use hwnas_core::oracle::{make_standard_profiles, AccuracyOracle, DeviceProfile};
use hwnas_core::predictor::LabeledPair;
use hwnas_core::space::{build_default_space, SearchSpace};
use hwnas_core::subnet::{SubnetArch, SubnetDocument};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        bail!("{}: unsupported format_version {found}", path.display());
    }
    Ok(())
}

/// End-to-end latency measurements used for calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairsDocument {
    pub format_version: u32,
    pub device: String,
    pub pairs: Vec<CalibrationPair>,
}

/// Oracle-labeled subnets for predictor training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataDocument {
    pub format_version: u32,
    pub oracle: AccuracyOracle,
    pub pairs: Vec<LabeledPair>,
}

/// The subnet a search settled on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestDocument {
    pub format_version: u32,
    pub objective: f64,
    pub metrics: Metrics,
    pub mhsa_blocks: usize,
    pub subnet: SubnetDocument,
}

impl BestDocument {
    pub fn new(arch: &SubnetArch, objective: f64, metrics: Metrics) -> Self {
        BestDocument {
            format_version: FORMAT_VERSION,
            objective,
            metrics,
            mhsa_blocks: arch.mhsa_count(),
            subnet: arch.to_document(),
        }
    }
}

pub fn load_space(run: &mut Run, path: Option<&Path>) -> Result<SearchSpace> {
    match path {
        Some(p) => run.read_with(p, SearchSpace::from_json),
        None => Ok(build_default_space()),
    }
}

/// A standard profile name or a profile JSON file.
pub fn load_profile(run: &mut Run, spec: &str) -> Result<DeviceProfile> {
    if let Some(p) = make_standard_profiles().get(spec) {
        return Ok(p.clone());
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("unknown profile `{spec}` (expected cpu_like, gpu_like, vpu_like or a JSON file)");
    }
    let profile: DeviceProfile = run.read_json(path)?;
    profile
        .check()
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(profile)
}

pub fn load_lut(run: &mut Run, path: &Path) -> Result<LatencyLut> {
    run.read_with(path, LatencyLut::from_json)
}

pub fn load_calibration(run: &mut Run, path: Option<&Path>) -> Result<CalibrationParams> {
    let Some(path) = path else {
        return Ok(CalibrationParams::identity());
    };
    let c: CalibrationParams = run.read_json(path)?;
    if c.format_version != LUT_FORMAT_VERSION {
        bail!(
            "{}: unsupported format_version {}",
            path.display(),
            c.format_version
        );
    }
    if !c.is_sane() {
        eprintln!(
            "warning: {}: kappa {} is not positive; estimates will not preserve ranking",
            path.display(),
            c.kappa
        );
    }
    Ok(c)
}

pub fn load_pairs(run: &mut Run, path: &Path) -> Result<PairsDocument> {
    let doc: PairsDocument = run.read_json(path)?;
    check_version(path, doc.format_version)?;
    Ok(doc)
}

pub fn load_data(run: &mut Run, path: &Path) -> Result<DataDocument> {
    let doc: DataDocument = run.read_json(path)?;
    check_version(path, doc.format_version)?;
    Ok(doc)
}

/// Subnets from a file holding one subnet document or one per line.
pub fn load_subnets(run: &mut Run, path: &Path) -> Result<Vec<SubnetArch>> {
    let text = run.read(path)?;
    if let Ok(one) = SubnetArch::from_json(&text) {
        return Ok(vec![one]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            SubnetArch::from_json(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

/// Table and calibration as an estimator, when a table is given.
pub fn load_estimator(
    run: &mut Run,
    lut: Option<&Path>,
    calib: Option<&Path>,
) -> Result<Option<LatencyEstimator>> {
    let Some(lut) = lut else {
        if calib.is_some() {
            bail!("--calib needs --lut");
        }
        return Ok(None);
    };
    Ok(Some(LatencyEstimator {
        lut: load_lut(run, lut)?,
        calib: load_calibration(run, calib)?,
    }))
}

pub fn constraint_set(
    constraints: Vec<Constraint>,
    latency: Option<LatencyEstimator>,
) -> Result<ConstraintSet> {
    Ok(ConstraintSet::new(constraints, latency)?)
}
