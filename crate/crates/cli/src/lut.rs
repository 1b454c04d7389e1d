use crate::formats::{
    load_calibration, load_lut, load_pairs, load_profile, load_space, load_subnets,
};
use crate::run::{pretty, Run};
use anyhow::Result;
use clap::{Args, Subcommand};
use hwnas_core::latency::{
    build_lut, calibrate, estimate, proxy_report, Aggregation, BuildOptions, LutDocument,
};
use hwnas_core::oracle::{calibration_pairs, SyntheticDevice};
use hwnas_core::subnet::{count_flops, count_params};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum LutCmd {
    /// Aggregate raw block measurements into a table.
    Build(BuildArgs),
    /// Fit the linear correction from end-to-end measurements.
    Calibrate(CalibrateArgs),
    /// Estimated latency, parameters and FLOPs of subnets.
    Estimate(EstimateArgs),
    /// Compare the table, FLOPs and parameters as latency proxies.
    ProxyReport(ProxyArgs),
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AggregationArg {
    Mean,
    Median,
}

#[derive(Args, Serialize)]
pub struct BuildArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    aggregation: AggregationArg,
    /// Write a partial table when keys are missing.
    #[arg(long)]
    allow_missing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    lut: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    lut: PathBuf,
    #[arg(long)]
    calib: Option<PathBuf>,
    /// One subnet JSON or JSON lines.
    #[arg(long)]
    subnets: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct ProxyArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    lut: PathBuf,
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Ground-truth device profile.
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(cmd: LutCmd, manifest: Option<PathBuf>) -> Result<()> {
    match cmd {
        LutCmd::Build(a) => {
            let mut run = Run::new("lut build", &a, manifest);
            let space = load_space(&mut run, a.space.as_deref())?;
            let doc = run.read_with(&a.measurements, LutDocument::from_json)?;
            let opts = BuildOptions {
                aggregation: match a.aggregation {
                    AggregationArg::Mean => Aggregation::Mean,
                    AggregationArg::Median => Aggregation::Median,
                },
                allow_missing: a.allow_missing,
            };
            let built = build_lut(&doc.entries, doc.info, &space, opts)
                .map_err(|e| anyhow::anyhow!("{}: {e}", a.measurements.display()))?;
            for k in &built.missing {
                eprintln!("warning: no measurement for {k}");
            }
            run.write(&a.out, &(built.lut.to_json_pretty() + "\n"))?;
            println!(
                "entries {} missing {}",
                built.lut.len(),
                built.missing.len()
            );
            run.finish()
        }
        LutCmd::Calibrate(a) => {
            let mut run = Run::new("lut calibrate", &a, manifest);
            let lut = load_lut(&mut run, &a.lut)?;
            let pairs = load_pairs(&mut run, &a.pairs)?;
            let c = calibrate(&lut, &pairs.pairs)
                .map_err(|e| anyhow::anyhow!("{}: {e}", a.pairs.display()))?;
            if !c.is_sane() {
                eprintln!("warning: fitted kappa {} is not positive", c.kappa);
            }
            run.write(&a.out, &pretty(&c))?;
            println!(
                "kappa {} epsilon {} rmse_ms {} spearman {}",
                c.kappa, c.epsilon, c.rmse_ms, c.spearman
            );
            run.finish()
        }
        LutCmd::Estimate(a) => {
            let mut run = Run::new("lut estimate", &a, manifest);
            let lut = load_lut(&mut run, &a.lut)?;
            let calib = load_calibration(&mut run, a.calib.as_deref())?;
            let subnets = load_subnets(&mut run, &a.subnets)?;
            let mut text = String::from("index,latency_ms,params,flops\n");
            for (i, s) in subnets.iter().enumerate() {
                let ms = estimate(&lut, &calib, s)
                    .map_err(|e| anyhow::anyhow!("{} subnet {i}: {e}", a.subnets.display()))?;
                text.push_str(&format!(
                    "{i},{ms},{},{}\n",
                    count_params(s),
                    count_flops(s)
                ));
            }
            run.emit(a.out.as_deref(), &text)?;
            run.finish()
        }
        LutCmd::ProxyReport(a) => {
            let mut run = Run::new("lut proxy-report", &a, manifest);
            run.seed(a.seed);
            run.out_dir(&a.out_dir)?;
            let space = load_space(&mut run, a.space.as_deref())?;
            let lut = load_lut(&mut run, &a.lut)?;
            let calib = load_calibration(&mut run, a.calib.as_deref())?;
            let device = SyntheticDevice {
                profile: load_profile(&mut run, &a.profile)?,
                kappa: a.kappa,
                epsilon: a.epsilon,
                noise_rel: a.noise,
            };
            let pairs = calibration_pairs(&space, &device, a.n, a.seed);
            let archs: Vec<_> = pairs.iter().map(|p| p.subnet.clone()).collect();
            let truth: Vec<f64> = pairs.iter().map(|p| p.measured_ms).collect();
            let report = proxy_report(&archs, &lut, &calib, &truth)?;
            let mut rows = String::from("predictor,spearman,rmse_ms\n");
            for r in &report.rows {
                rows.push_str(&format!("{},{},{}\n", r.predictor, r.spearman, r.rmse_ms));
            }
            let mut scatter = String::from("predictor,x,y\n");
            for p in &report.scatter {
                scatter.push_str(&format!("{},{},{}\n", p.predictor, p.x, p.y));
            }
            run.write_out("proxy.csv", &rows)?;
            run.write_out("scatter.csv", &scatter)?;
            print!("{rows}");
            run.finish()
        }
    }
}
