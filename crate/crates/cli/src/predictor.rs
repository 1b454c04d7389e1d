use crate::formats::{load_data, load_space, DataDocument, FORMAT_VERSION};
use crate::run::{pretty, Run};
use anyhow::Result;
use clap::{Args, Subcommand};
use hwnas_core::oracle::AccuracyOracle;
use hwnas_core::predictor::{
    split_pairs, train, Hyper, LabeledPair, PredictorModel, DEFAULT_TRAIN_FRACTION,
};
use hwnas_core::rng_for;
use hwnas_core::space::{init_uniform_distribution, sample_genome};
use hwnas_core::stats::spearman;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum PredictorCmd {
    /// Oracle-labeled random subnets.
    GenData(GenDataArgs),
    /// Fit the predictor; writes model.json and curve.csv.
    Train(TrainArgs),
    /// Score a model on labeled data; writes scatter.csv and summary.json.
    Eval(EvalArgs),
}

#[derive(Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 6000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Seed of the oracle's label noise.
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Leading fraction of the data used for training; the rest validates.
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct EvalSummary {
    format_version: u32,
    n: usize,
    spearman: f64,
    l1: f64,
}

pub fn run(cmd: PredictorCmd, manifest: Option<PathBuf>) -> Result<()> {
    match cmd {
        PredictorCmd::GenData(a) => {
            let mut run = Run::new("predictor gen-data", &a, manifest);
            run.seed(a.seed);
            let space = load_space(&mut run, a.space.as_deref())?;
            let dist = init_uniform_distribution(&space);
            let oracle = AccuracyOracle::with_seed(a.oracle_seed);
            let pairs = (0..a.n as u64)
                .map(|i| {
                    let arch =
                        sample_genome(&space, &dist, &mut rng_for(a.seed, 0, i)).to_arch(&space);
                    LabeledPair {
                        accuracy: oracle.accuracy(&arch),
                        arch,
                    }
                })
                .collect();
            let doc = DataDocument {
                format_version: FORMAT_VERSION,
                oracle,
                pairs,
            };
            run.write(&a.out, &pretty(&doc))?;
            run.finish()
        }
        PredictorCmd::Train(a) => {
            let mut run = Run::new("predictor train", &a, manifest);
            run.seed(a.seed);
            run.out_dir(&a.out_dir)?;
            anyhow::ensure!(
                a.train_fraction > 0.0 && a.train_fraction < 1.0,
                "--train-fraction must be in (0, 1)"
            );
            let space = load_space(&mut run, a.space.as_deref())?;
            let data = load_data(&mut run, &a.data)?;
            let d = Hyper::default();
            let hyper = Hyper {
                seed: a.seed,
                epochs: a.epochs.unwrap_or(d.epochs),
                learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
                batch_size: a.batch_size.unwrap_or(d.batch_size),
                ..d
            };
            let (tr, va) = split_pairs(&data.pairs, a.train_fraction);
            println!("train {} validation {}", tr.len(), va.len());
            let report = train(&space, tr, va, &hyper)?;
            run.write_out("model.json", &(report.model.to_json() + "\n"))?;
            run.write_out("curve.csv", &report.curve_csv())?;
            println!(
                "best epoch {} validation spearman {}",
                report.model.best_epoch, report.model.best_val_spearman
            );
            run.finish()
        }
        PredictorCmd::Eval(a) => {
            let mut run = Run::new("predictor eval", &a, manifest);
            run.out_dir(&a.out_dir)?;
            let model = run.read_with(&a.model, PredictorModel::from_json)?;
            let data = load_data(&mut run, &a.data)?;
            let mut predicted = Vec::with_capacity(data.pairs.len());
            for (i, p) in data.pairs.iter().enumerate() {
                let y = model
                    .try_predict(&p.arch)
                    .map_err(|e| anyhow::anyhow!("{} pair {i}: {e}", a.data.display()))?;
                predicted.push(y);
            }
            let actual: Vec<f64> = data.pairs.iter().map(|p| p.accuracy).collect();
            let rho = spearman(&predicted, &actual)?;
            let l1 = predicted
                .iter()
                .zip(&actual)
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>()
                / actual.len().max(1) as f64;
            let mut scatter = String::from("predicted,actual\n");
            for (p, t) in predicted.iter().zip(&actual) {
                scatter.push_str(&format!("{p},{t}\n"));
            }
            let summary = EvalSummary {
                format_version: FORMAT_VERSION,
                n: actual.len(),
                spearman: rho,
                l1,
            };
            run.write_out("scatter.csv", &scatter)?;
            run.write_out("summary.json", &pretty(&summary))?;
            println!("spearman {rho} l1 {l1}");
            run.finish()
        }
    }
}
