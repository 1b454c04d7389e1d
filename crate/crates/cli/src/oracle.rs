use crate::formats::{load_profile, load_space, PairsDocument, FORMAT_VERSION};
use crate::run::{pretty, Run};
use anyhow::Result;
use clap::{Args, Subcommand};
use hwnas_core::latency::{LutDocument, LUT_FORMAT_VERSION};
use hwnas_core::oracle::{
    calibration_pairs, device_info, generate_lut_measurements, make_standard_profiles,
    reference_arch, synthetic_latency, SyntheticDevice, REFERENCE_VARIANTS,
};
use hwnas_core::rng_from_seed;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum OracleCmd {
    /// The standard device profiles as JSON.
    Profiles(ProfilesArgs),
    /// Latency of the reference variants on each standard profile.
    Reference(ProfilesArgs),
    /// Block measurements for every table key of a space.
    GenLut(GenLutArgs),
    /// End-to-end measurements of random subnets for calibration.
    GenPairs(GenPairsArgs),
}

#[derive(Args, Serialize)]
pub struct ProfilesArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct GenLutArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    /// Standard profile name or profile JSON.
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Relative Gaussian jitter per measurement.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct GenPairsArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Relative standard deviation of the end-to-end noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cmd: OracleCmd, manifest: Option<PathBuf>) -> Result<()> {
    match cmd {
        OracleCmd::Profiles(a) => {
            let mut run = Run::new("oracle profiles", &a, manifest);
            run.emit(a.out.as_deref(), &pretty(&make_standard_profiles()))?;
            run.finish()
        }
        OracleCmd::Reference(a) => {
            let mut run = Run::new("oracle reference", &a, manifest);
            let space = hwnas_core::space::build_default_space();
            let profiles = make_standard_profiles();
            let mut text = String::from("profile,variant,latency_ms\n");
            for p in profiles.all() {
                for v in &REFERENCE_VARIANTS {
                    let ms = synthetic_latency(&reference_arch(&space, v), p);
                    text.push_str(&format!("{},{},{ms}\n", p.name, v.name));
                }
            }
            run.emit(a.out.as_deref(), &text)?;
            run.finish()
        }
        OracleCmd::GenLut(a) => {
            let mut run = Run::new("oracle gen-lut", &a, manifest);
            run.seed(a.seed);
            let space = load_space(&mut run, a.space.as_deref())?;
            let profile = load_profile(&mut run, &a.profile)?;
            anyhow::ensure!(a.jitter >= 0.0, "--jitter must be non-negative");
            let entries = generate_lut_measurements(
                &space,
                &profile,
                a.repeats,
                a.jitter,
                &mut rng_from_seed(a.seed),
            );
            let doc = LutDocument {
                format_version: LUT_FORMAT_VERSION,
                info: device_info(&profile),
                entries,
            };
            run.write(&a.out, &(doc.to_json_pretty() + "\n"))?;
            run.finish()
        }
        OracleCmd::GenPairs(a) => {
            let mut run = Run::new("oracle gen-pairs", &a, manifest);
            run.seed(a.seed);
            let space = load_space(&mut run, a.space.as_deref())?;
            let profile = load_profile(&mut run, &a.profile)?;
            anyhow::ensure!(a.noise >= 0.0, "--noise must be non-negative");
            let device = SyntheticDevice {
                profile,
                kappa: a.kappa,
                epsilon: a.epsilon,
                noise_rel: a.noise,
            };
            let doc = PairsDocument {
                format_version: FORMAT_VERSION,
                device: device.profile.name.clone(),
                pairs: calibration_pairs(&space, &device, a.n, a.seed),
            };
            run.write(&a.out, &pretty(&doc))?;
            run.finish()
        }
    }
}
