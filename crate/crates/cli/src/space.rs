use crate::formats::load_space;
use crate::run::Run;
use anyhow::Result;
use clap::{Args, Subcommand};
use hwnas_core::rng_for;
use hwnas_core::space::{
    enumerate_subnets, init_uniform_distribution, lut_census, sample_genome, SamplingDistribution,
};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum SpaceCmd {
    /// Exact number of subnets.
    Count(SpaceArgs),
    /// Distinct latency-table blocks per row of the space.
    Census(SpaceArgs),
    /// Random subnets as JSON lines.
    Sample(SampleArgs),
    /// Every subnet of a small space as JSON lines.
    Enumerate(EnumerateArgs),
}

#[derive(Args, Serialize)]
pub struct SpaceArgs {
    /// Space override JSON (default: the built-in space).
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Sampling distribution JSON (default: uniform).
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct EnumerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    space: SpaceArgs,
    /// Refuse spaces with more subnets than this.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cmd: SpaceCmd, manifest: Option<PathBuf>) -> Result<()> {
    match cmd {
        SpaceCmd::Count(a) => {
            let mut run = Run::new("space count", &a, manifest);
            let space = load_space(&mut run, a.space.as_deref())?;
            let n = space.count_subnets().to_string();
            let text = format!("{n}\nmagnitude {}\n", n.len() - 1);
            run.emit(None, &text)?;
            run.finish()
        }
        SpaceCmd::Census(a) => {
            let mut run = Run::new("space census", &a, manifest);
            let space = load_space(&mut run, a.space.as_deref())?;
            let rows = lut_census(&space);
            let mut text = String::from("row,blocks\n");
            let mut total = 0;
            for r in &rows {
                text.push_str(&format!("{},{}\n", r.label, r.count()));
                total += r.count();
            }
            text.push_str(&format!("total,{total}\n"));
            run.emit(None, &text)?;
            run.finish()
        }
        SpaceCmd::Sample(a) => {
            let mut run = Run::new("space sample", &a, manifest);
            run.seed(a.seed);
            let space = load_space(&mut run, a.space.space.as_deref())?;
            let dist = match &a.distribution {
                Some(p) => {
                    let d: SamplingDistribution = run.read_json(p)?;
                    anyhow::ensure!(
                        d.matches_space(&space),
                        "{}: distribution does not match the space",
                        p.display()
                    );
                    d.check(1e-6)?;
                    d
                }
                None => init_uniform_distribution(&space),
            };
            run.stream(a.out.as_deref(), |w| {
                for i in 0..a.n as u64 {
                    let arch =
                        sample_genome(&space, &dist, &mut rng_for(a.seed, 0, i)).to_arch(&space);
                    writeln!(w, "{}", arch.to_json())?;
                }
                Ok(())
            })?;
            run.finish()
        }
        SpaceCmd::Enumerate(a) => {
            let mut run = Run::new("space enumerate", &a, manifest);
            let space = load_space(&mut run, a.space.space.as_deref())?;
            let stream = enumerate_subnets(&space, a.cap)?;
            run.stream(a.out.as_deref(), |w| {
                for i in 0..stream.total() {
                    writeln!(w, "{}", stream.subnet_at(i).to_json())?;
                }
                Ok(())
            })?;
            run.finish()
        }
    }
}
