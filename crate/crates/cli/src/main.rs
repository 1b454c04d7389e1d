use anyhow::Result;
use clap::{Parser, Subcommand};
use hwnas_core::evolution::SearchError;
use std::path::PathBuf;
use std::process::ExitCode;

mod formats;
mod lut;
mod oracle;
mod predictor;
mod run;
mod search;
mod space;

#[derive(Parser)]
#[command(
    name = "hwnas",
    version,
    about = "Hardware-aware architecture search toolkit"
)]
struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Where to write the run manifest (default: <out-dir>/manifest.json,
    /// or standard error for commands without an output directory).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count, sample or enumerate a search space.
    #[command(subcommand)]
    Space(space::SpaceCmd),
    /// Synthetic devices: profiles, block measurements, end-to-end pairs.
    #[command(subcommand)]
    Oracle(oracle::OracleCmd),
    /// Latency lookup tables.
    #[command(subcommand)]
    Lut(lut::LutCmd),
    /// Accuracy predictor data, training and evaluation.
    #[command(subcommand)]
    Predictor(predictor::PredictorCmd),
    /// Constrained search.
    #[command(subcommand)]
    Search(search::SearchCmd),
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(SearchError::InfeasibleConstraints { .. }) = cause.downcast_ref::<SearchError>()
        {
            return EXIT_INFEASIBLE;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let manifest = cli.manifest;
    match cli.command {
        Command::Space(c) => space::run(c, manifest),
        Command::Oracle(c) => oracle::run(c, manifest),
        Command::Lut(c) => lut::run(c, manifest),
        Command::Predictor(c) => predictor::run(c, manifest),
        Command::Search(c) => search::run(c, manifest),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
