//! Constrained evolutionary search with an evolving sampling distribution.
//!
//! Candidates are produced in fixed-size batches. Every candidate draws from
//! its own random stream keyed on (seed, phase, index), batches are scored in
//! parallel, and acceptance walks each batch in index order. The outcome is
//! therefore identical for any number of worker threads.

use super::{empirical_distribution, evolve_distribution, ConstraintSet, Metrics};
use crate::latency::LatencyError;
use crate::predictor::AccuracyModel;
use crate::rng_for;
use crate::space::{
    init_uniform_distribution, sample_genome, DistributionError, Genome, SamplingDistribution,
    SearchSpace,
};
use crate::subnet::{crossover_genome, mutate_genome, SubnetArch};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;

pub const SEARCH_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub pop_size: usize,
    pub total_gen: usize,
    /// Sampled subnets between distribution updates during initialization.
    pub evolve_step: usize,
    pub k: usize,
    pub lambda: f64,
    pub delta: f64,
    pub p_mut: f64,
    pub n_mutation: usize,
    pub n_crossover: usize,
    /// Consecutive rejected candidates tolerated before giving up.
    pub max_sample_attempts: u64,
    /// Minimum probability kept on every option after an update.
    pub floor: Option<f64>,
    /// Stored history entries; older ones are replaced reservoir-style.
    pub history_cap: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            pop_size: 100,
            total_gen: 50,
            evolve_step: 200,
            k: 25,
            lambda: 0.75,
            delta: 0.0,
            p_mut: 0.2,
            n_mutation: 25,
            n_crossover: 25,
            max_sample_attempts: 1_000_000,
            floor: Some(1e-3),
            history_cap: 100_000,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::Config(msg));
        if self.pop_size == 0 {
            return bad("pop_size must be positive".into());
        }
        if self.k == 0 || self.k > self.pop_size {
            return bad(format!("k = {} must be in 1..={}", self.k, self.pop_size));
        }
        if self.k + self.n_mutation + self.n_crossover > self.pop_size {
            return bad(format!(
                "k + n_mutation + n_crossover = {} exceeds pop_size {}",
                self.k + self.n_mutation + self.n_crossover,
                self.pop_size
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} outside [0, 1]", self.lambda));
        }
        if !(self.delta >= 0.0) {
            return bad(format!("delta = {} must be non-negative", self.delta));
        }
        if !(0.0..=1.0).contains(&self.p_mut) {
            return bad(format!("p_mut = {} outside [0, 1]", self.p_mut));
        }
        if self.evolve_step == 0 {
            return bad("evolve_step must be positive".into());
        }
        if self.max_sample_attempts == 0 {
            return bad("max_sample_attempts must be positive".into());
        }
        if self.history_cap == 0 {
            return bad("history_cap must be positive".into());
        }
        if let Some(f) = self.floor {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("floor = {f} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("generation {generation}: {attempts} consecutive candidates violated the constraints")]
    InfeasibleConstraints { generation: usize, attempts: u64 },
    #[error("generation {generation}: {source}")]
    Latency {
        generation: usize,
        source: LatencyError,
    },
    #[error("generation {generation}: {source}")]
    Distribution {
        generation: usize,
        source: DistributionError,
    },
}

/// A scored, constraint-satisfying subnet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genome: Genome,
    pub arch: SubnetArch,
    pub predicted: f64,
    pub metrics: Metrics,
    /// Acceptance order; the last tie-break.
    pub order: u64,
}

/// Best first: higher prediction, then lower latency, then earlier.
fn rank_cmp(a: &Member, b: &Member) -> Ordering {
    b.predicted
        .total_cmp(&a.predicted)
        .then_with(|| {
            let la = a.metrics.latency_ms.unwrap_or(0.0);
            let lb = b.metrics.latency_ms.unwrap_or(0.0);
            la.total_cmp(&lb)
        })
        .then_with(|| a.order.cmp(&b.order))
}

pub fn rank(members: &mut [Member]) {
    members.sort_by(rank_cmp);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    /// Stored space quality after this generation's update check.
    pub q: f64,
    /// Quality of this generation's top-k.
    pub q_t: f64,
    pub best_pred: f64,
    /// Fresh samples drawn per accepted fresh sample.
    pub attempts_per_accept: f64,
    /// Total entropy of the sampling distribution (nats).
    pub entropy: f64,
    pub evolved: bool,
}

/// One distribution update. Generation 0 is initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionEvent {
    pub generation: usize,
    /// Subnets sampled so far (initialization only counts history).
    pub sampled: u64,
    pub topk: usize,
    pub distribution: SamplingDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitStats {
    pub sampled: u64,
    pub accepted: usize,
    pub evolutions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Member,
    pub population: Vec<Member>,
    pub log: Vec<GenerationLog>,
    pub init: InitStats,
    pub events: Vec<EvolutionEvent>,
    pub distribution: SamplingDistribution,
}

impl SearchOutcome {
    pub fn log_csv(&self) -> String {
        log_csv(&self.log)
    }
}

pub fn log_csv(log: &[GenerationLog]) -> String {
    let mut s = String::from("generation,q,q_t,best_pred,attempts_per_accept,entropy,evolved\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.generation, r.q, r.q_t, r.best_pred, r.attempts_per_accept, r.entropy, r.evolved
        );
    }
    s
}

const STREAM_INIT: u64 = 0;
const STREAM_MUTATE: u64 = 1;
const STREAM_CROSS: u64 = 2;
const STREAM_FRESH: u64 = 3;
const STREAM_RESERVOIR: u64 = 4;
const BATCH: u64 = 256;

fn stream(generation: usize, phase: u64) -> u64 {
    (generation as u64) << 8 | phase
}

enum Scored {
    Rejected,
    Accepted(Member),
}

/// Feasible history entries with reservoir replacement beyond the cap.
/// Infeasible samples are counted but never stored: they cannot enter a
/// ranking.
struct History {
    cap: usize,
    seen: u64,
    stored: Vec<Member>,
    feasible_seen: u64,
    rng: ChaCha8Rng,
}

impl History {
    fn push(&mut self, m: Option<&Member>) {
        self.seen += 1;
        let Some(m) = m else { return };
        self.feasible_seen += 1;
        if self.stored.len() < self.cap {
            self.stored.push(m.clone());
        } else {
            let j = self.rng.random_range(0..self.feasible_seen);
            if (j as usize) < self.cap {
                self.stored[j as usize] = m.clone();
            }
        }
    }
}

struct Run<'a, M: ?Sized> {
    space: &'a SearchSpace,
    config: &'a SearchConfig,
    constraints: &'a ConstraintSet,
    model: &'a M,
    dist: SamplingDistribution,
    next_order: u64,
    events: Vec<EvolutionEvent>,
}

impl<M: AccuracyModel + ?Sized> Run<'_, M> {
    fn score(&self, genome: Genome, generation: usize) -> Result<Scored, SearchError> {
        let arch = genome.to_arch(self.space);
        let metrics = self
            .constraints
            .metrics(&arch)
            .map_err(|source| SearchError::Latency { generation, source })?;
        if !self.constraints.check(&metrics).passed() {
            return Ok(Scored::Rejected);
        }
        let predicted = self.model.predict(&arch);
        Ok(Scored::Accepted(Member {
            genome,
            arch,
            predicted,
            metrics,
            order: 0,
        }))
    }

    fn score_batch<F>(
        &self,
        generation: usize,
        phase: u64,
        range: std::ops::Range<u64>,
        produce: &F,
    ) -> Result<Vec<Scored>, SearchError>
    where
        F: Fn(&mut ChaCha8Rng) -> Genome + Sync,
    {
        let seed = self.config.seed;
        let id = stream(generation, phase);
        range
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, id, i);
                self.score(produce(&mut rng), generation)
            })
            .collect()
    }

    fn accept(&mut self, mut m: Member) -> Member {
        m.order = self.next_order;
        self.next_order += 1;
        m
    }

    /// Draws candidates until `need` pass the constraints. Returns them with
    /// the number of candidates examined.
    fn fill<F>(
        &mut self,
        need: usize,
        generation: usize,
        phase: u64,
        produce: F,
    ) -> Result<(Vec<Member>, u64), SearchError>
    where
        F: Fn(&mut ChaCha8Rng) -> Genome + Sync,
    {
        let mut out = Vec::with_capacity(need);
        let mut next = 0u64;
        let mut consecutive = 0u64;
        while out.len() < need {
            let batch = BATCH.min(4 * (need - out.len()) as u64).max(16);
            let scored = self.score_batch(generation, phase, next..next + batch, &produce)?;
            for s in scored {
                next += 1;
                match s {
                    Scored::Accepted(m) => {
                        consecutive = 0;
                        let m = self.accept(m);
                        out.push(m);
                        if out.len() == need {
                            break;
                        }
                    }
                    Scored::Rejected => {
                        consecutive += 1;
                        if consecutive >= self.config.max_sample_attempts {
                            return Err(SearchError::InfeasibleConstraints {
                                generation,
                                attempts: consecutive,
                            });
                        }
                    }
                }
            }
        }
        Ok((out, next))
    }

    fn evolve(
        &mut self,
        topk: &[Member],
        generation: usize,
        sampled: u64,
    ) -> Result<(), SearchError> {
        let genomes: Vec<Genome> = topk.iter().map(|m| m.genome.clone()).collect();
        let star = empirical_distribution(self.space, &genomes, &self.dist);
        let mut next = evolve_distribution(&self.dist, &star, self.config.lambda)
            .map_err(|source| SearchError::Distribution { generation, source })?;
        if let Some(f) = self.config.floor {
            next.apply_floor(f);
        }
        self.dist = next;
        self.events.push(EvolutionEvent {
            generation,
            sampled,
            topk: topk.len(),
            distribution: self.dist.clone(),
        });
        Ok(())
    }

    fn topk(&self, members: &[Member]) -> Vec<Member> {
        let mut ranked = members.to_vec();
        rank(&mut ranked);
        ranked.truncate(self.config.k);
        ranked
    }

    /// Rejection-samples the first population, updating the distribution
    /// from the history every `evolve_step` samples.
    fn initialize(
        &mut self,
        history: &mut History,
    ) -> Result<(Vec<Member>, InitStats), SearchError> {
        let cfg = self.config;
        let mut pop = Vec::with_capacity(cfg.pop_size);
        let mut next = 0u64;
        let mut consecutive = 0u64;
        let mut evolutions = 0;
        while pop.len() < cfg.pop_size {
            let to_boundary = cfg.evolve_step as u64 - history.seen % cfg.evolve_step as u64;
            let batch = BATCH.min(to_boundary);
            let space = self.space;
            let dist = self.dist.clone();
            let scored = self.score_batch(0, STREAM_INIT, next..next + batch, &|rng| {
                sample_genome(space, &dist, rng)
            })?;
            for s in scored {
                next += 1;
                match s {
                    Scored::Accepted(m) => {
                        consecutive = 0;
                        let m = self.accept(m);
                        history.push(Some(&m));
                        if pop.len() < cfg.pop_size {
                            pop.push(m);
                        }
                    }
                    Scored::Rejected => {
                        history.push(None);
                        consecutive += 1;
                        if consecutive >= cfg.max_sample_attempts {
                            return Err(SearchError::InfeasibleConstraints {
                                generation: 0,
                                attempts: consecutive,
                            });
                        }
                    }
                }
                if history.seen.is_multiple_of(cfg.evolve_step as u64) && !history.stored.is_empty()
                {
                    let topk = self.topk(&history.stored);
                    self.evolve(&topk, 0, history.seen)?;
                    evolutions += 1;
                }
                if pop.len() == cfg.pop_size {
                    break;
                }
            }
        }
        let stats = InitStats {
            sampled: next,
            accepted: pop.len(),
            evolutions,
        };
        Ok((pop, stats))
    }
}

/// Searches for the subnet with the highest predicted accuracy among those
/// satisfying every constraint.
pub fn search<M: AccuracyModel + ?Sized>(
    space: &SearchSpace,
    config: &SearchConfig,
    constraints: &ConstraintSet,
    model: &M,
) -> Result<SearchOutcome, SearchError> {
    search_from(
        space,
        config,
        constraints,
        model,
        init_uniform_distribution(space),
    )
}

/// [`search`] starting from a given sampling distribution.
pub fn search_from<M: AccuracyModel + ?Sized>(
    space: &SearchSpace,
    config: &SearchConfig,
    constraints: &ConstraintSet,
    model: &M,
    initial: SamplingDistribution,
) -> Result<SearchOutcome, SearchError> {
    config.check()?;
    if !initial.matches_space(space) {
        return Err(SearchError::Distribution {
            generation: 0,
            source: DistributionError::SupportMismatch(
                "initial distribution does not match the space".into(),
            ),
        });
    }
    let mut run = Run {
        space,
        config,
        constraints,
        model,
        dist: initial,
        next_order: 0,
        events: Vec::new(),
    };
    let mut history = History {
        cap: config.history_cap,
        seen: 0,
        stored: Vec::new(),
        feasible_seen: 0,
        rng: rng_for(config.seed, STREAM_RESERVOIR, 0),
    };
    let (mut pop, init) = run.initialize(&mut history)?;
    let mut q = mean_pred(&pop);
    let mut log = Vec::with_capacity(config.total_gen);

    for generation in 1..=config.total_gen {
        let topk = run.topk(&pop);
        let q_t = mean_pred(&topk);
        let evolved = q_t - q > config.delta;
        if evolved {
            q = q_t;
            run.evolve(&topk, generation, history.seen)?;
        }
        let (dist, p_mut) = (run.dist.clone(), config.p_mut);
        let k = topk.len();
        let parents: Vec<&Genome> = topk.iter().map(|m| &m.genome).collect();
        let (mutants, _) = run.fill(config.n_mutation, generation, STREAM_MUTATE, |rng| {
            let p = parents[rng.random_range(0..k)];
            mutate_genome(space, p, &dist, p_mut, rng)
        })?;
        let (children, _) = run.fill(config.n_crossover, generation, STREAM_CROSS, |rng| {
            let a = parents[rng.random_range(0..k)];
            let b = parents[rng.random_range(0..k)];
            crossover_genome(a, b, rng)
        })?;
        pop = topk;
        pop.extend(mutants);
        pop.extend(children);
        let need = config.pop_size.saturating_sub(pop.len());
        let (fresh, attempts) = run.fill(need, generation, STREAM_FRESH, |rng| {
            sample_genome(space, &dist, rng)
        })?;
        pop.extend(fresh);
        for m in &pop {
            history.push(Some(m));
        }
        let best_pred = pop
            .iter()
            .map(|m| m.predicted)
            .fold(f64::NEG_INFINITY, f64::max);
        log.push(GenerationLog {
            generation,
            q,
            q_t,
            best_pred,
            attempts_per_accept: if need == 0 {
                0.0
            } else {
                attempts as f64 / need as f64
            },
            entropy: run.dist.entropy(),
            evolved,
        });
    }

    rank(&mut pop);
    Ok(SearchOutcome {
        best: pop[0].clone(),
        population: pop,
        log,
        init,
        events: run.events,
        distribution: run.dist,
    })
}

fn mean_pred(members: &[Member]) -> f64 {
    members.iter().map(|m| m.predicted).sum::<f64>() / members.len() as f64
}

/// Fraction of `n` subnets drawn from `dist` that satisfy `constraints`.
pub fn acceptance_rate(
    space: &SearchSpace,
    dist: &SamplingDistribution,
    constraints: &ConstraintSet,
    n: u64,
    seed: u64,
) -> Result<f64, LatencyError> {
    let passed = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, u64::MAX, i);
            let arch = sample_genome(space, dist, &mut rng).to_arch(space);
            Ok(u64::from(
                constraints.check(&constraints.metrics(&arch)?).passed(),
            ))
        })
        .collect::<Result<Vec<u64>, LatencyError>>()?
        .into_iter()
        .sum::<u64>();
    Ok(passed as f64 / n as f64)
}

/// Expected rejection-sampling draws per accepted subnet.
pub fn attempts_per_accept(rate: f64) -> f64 {
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}
