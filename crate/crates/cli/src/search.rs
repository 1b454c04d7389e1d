use crate::formats::{
    constraint_set, load_estimator, load_profile, load_space, BestDocument, FORMAT_VERSION,
};
use crate::run::{pretty, Run};
use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use hwnas_core::evolution::{search, Constraint, SearchConfig, SearchDocument, SearchError};
use hwnas_core::oracle::{adapt_study, brute_force_best, AccuracyOracle, AdaptStudy};
use hwnas_core::predictor::{AccuracyModel, PredictorModel};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum SearchCmd {
    /// Evolutionary search; writes best.json, generations.csv and
    /// distribution.json.
    Run(RunArgs),
    /// Exhaustive search of a small space with the accuracy oracle.
    Brute(BruteArgs),
    /// Paired searches on attention-hostile and attention-friendly devices.
    AdaptStudy(AdaptArgs),
}

#[derive(Args, Serialize)]
pub struct RunArgs {
    /// Space override JSON; defaults to the model's space.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Search document with `config` and `constraints`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `metric=bound` with metric latency_ms, params or flops; repeatable.
    #[arg(long = "constraint")]
    constraints: Vec<Constraint>,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Trained predictor JSON.
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    model: Option<PathBuf>,
    /// Score with the synthetic accuracy oracle instead of a predictor.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    #[arg(long)]
    seed: u64,
    /// Overrides the configured number of generations.
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct BruteArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long = "constraint")]
    constraints: Vec<Constraint>,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Refuse spaces with more subnets than this.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
    /// Seed of the oracle's noise.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
pub struct AdaptArgs {
    #[arg(long)]
    space: Option<PathBuf>,
    /// Profile whose attention cost is scaled up and down.
    #[arg(long, default_value = "gpu_like")]
    profile: String,
    #[arg(long, default_value_t = 10.0)]
    factor: f64,
    /// First search seed; the study uses `seed..seed + seeds`.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Latency bound as a quantile of uniform samples on each profile.
    #[arg(long, default_value_t = 0.2)]
    quantile: f64,
    #[arg(long, default_value_t = 2000)]
    bound_samples: usize,
    #[arg(long, default_value_t = 30)]
    generations: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct BruteSummary {
    format_version: u32,
    scanned: u64,
    feasible: u64,
    best_index: Option<u64>,
    best_value: Option<f64>,
    min_latency_ms: Option<f64>,
}

#[derive(Serialize)]
struct AdaptSummary {
    format_version: u32,
    seeds: usize,
    hostile_fewer: usize,
    majority: bool,
    hostile_bound_ms: f64,
    friendly_bound_ms: f64,
}

pub fn run(cmd: SearchCmd, manifest: Option<PathBuf>) -> Result<()> {
    match cmd {
        SearchCmd::Run(a) => run_search(a, manifest),
        SearchCmd::Brute(a) => {
            let mut run = Run::new("search brute", &a, manifest);
            run.seed(a.seed);
            run.out_dir(&a.out_dir)?;
            let space = load_space(&mut run, a.space.as_deref())?;
            let est = load_estimator(&mut run, a.lut.as_deref(), a.calib.as_deref())?;
            let set = constraint_set(a.constraints.clone(), est)?;
            let oracle = AccuracyOracle::with_seed(a.seed);
            let bf = brute_force_best(&space, |x| oracle.accuracy(x), &set, a.cap)?;
            let summary = BruteSummary {
                format_version: FORMAT_VERSION,
                scanned: bf.scanned,
                feasible: bf.feasible,
                best_index: bf.best_index,
                best_value: bf.best_value,
                min_latency_ms: bf.min_latency_ms,
            };
            run.write_out("summary.json", &pretty(&summary))?;
            let (Some(best), Some(value)) = (&bf.best, bf.best_value) else {
                run.finish()?;
                return Err(SearchError::InfeasibleConstraints {
                    generation: 0,
                    attempts: bf.scanned,
                }
                .into());
            };
            let doc = BestDocument::new(best, value, set.metrics(best)?);
            run.write_out("best.json", &pretty(&doc))?;
            println!("feasible {} of {} best {value}", bf.feasible, bf.scanned);
            run.finish()
        }
        SearchCmd::AdaptStudy(a) => {
            let mut run = Run::new("search adapt-study", &a, manifest);
            run.seed(a.seed);
            run.out_dir(&a.out_dir)?;
            let space = load_space(&mut run, a.space.as_deref())?;
            let d = AdaptStudy::default();
            let study = AdaptStudy {
                base: load_profile(&mut run, &a.profile)?,
                factor: a.factor,
                seeds: (a.seed..a.seed + a.seeds).collect(),
                quantile: a.quantile,
                bound_samples: a.bound_samples,
                search: SearchConfig {
                    total_gen: a.generations,
                    ..d.search
                },
                oracle: d.oracle,
            };
            let report = adapt_study(&space, &study)?;
            let summary = AdaptSummary {
                format_version: FORMAT_VERSION,
                seeds: report.rows.len(),
                hostile_fewer: report.hostile_fewer(),
                majority: report.majority(),
                hostile_bound_ms: report.hostile_bound_ms,
                friendly_bound_ms: report.friendly_bound_ms,
            };
            run.write_out("adapt.csv", &report.csv())?;
            run.write_out("summary.json", &pretty(&summary))?;
            print!("{}", report.csv());
            println!(
                "hostile profile has fewer MHSA blocks in {} of {} seeds",
                summary.hostile_fewer, summary.seeds
            );
            run.finish()
        }
    }
}

fn run_search(a: RunArgs, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("search run", &a, manifest);
    run.seed(a.seed);
    run.out_dir(&a.out_dir)?;
    let model = match &a.model {
        Some(p) => Some(run.read_with(p, PredictorModel::from_json)?),
        None => None,
    };
    let space = match (&a.space, &model) {
        (Some(p), m) => {
            let s = load_space(&mut run, Some(p))?;
            if m.as_ref().is_some_and(|m| m.space != s) {
                bail!(
                    "{}: space differs from the one the model was trained on",
                    p.display()
                );
            }
            s
        }
        (None, Some(m)) => m.space.clone(),
        (None, None) => load_space(&mut run, None)?,
    };
    let mut doc = match &a.config {
        Some(p) => {
            let d: SearchDocument = run.read_json(p)?;
            if d.format_version != hwnas_core::evolution::SEARCH_FORMAT_VERSION {
                bail!(
                    "{}: unsupported format_version {}",
                    p.display(),
                    d.format_version
                );
            }
            d
        }
        None => SearchDocument {
            format_version: hwnas_core::evolution::SEARCH_FORMAT_VERSION,
            config: SearchConfig::default(),
            constraints: Vec::new(),
        },
    };
    doc.constraints.extend(a.constraints.iter().cloned());
    doc.config.seed = a.seed;
    if let Some(g) = a.generations {
        doc.config.total_gen = g;
    }
    let est = load_estimator(&mut run, a.lut.as_deref(), a.calib.as_deref())?;
    let set = constraint_set(doc.constraints, est)?;
    let oracle = AccuracyOracle::with_seed(a.oracle_seed);
    let scorer: &dyn AccuracyModel = match &model {
        Some(m) => m,
        None => &oracle,
    };
    let out = search(&space, &doc.config, &set, scorer)?;
    let best = BestDocument::new(&out.best.arch, out.best.predicted, out.best.metrics);
    run.write_out("best.json", &pretty(&best))?;
    run.write_out("generations.csv", &out.log_csv())?;
    run.write_out("distribution.json", &pretty(&out.distribution))?;
    println!(
        "best {} mhsa {} params {} flops {}{}",
        out.best.predicted,
        best.mhsa_blocks,
        out.best.metrics.params,
        out.best.metrics.flops,
        out.best
            .metrics
            .latency_ms
            .map(|l| format!(" latency_ms {l}"))
            .unwrap_or_default()
    );
    run.finish()
}
