//! Acceptance gate. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

mod common;

use hwnas_core::evolution::{
    acceptance_rate, attempts_per_accept, evolve_distribution, search, Constraint, ConstraintSet,
    LatencyEstimator, Metric, SearchConfig,
};
use hwnas_core::latency::{calibrate, spearman};
use hwnas_core::oracle::{
    adapt_study, brute_force_best, calibration_pairs, latency_quantile, make_standard_profiles,
    reference_arch, synthetic_estimator, synthetic_latency, AccuracyOracle, AdaptStudy,
    SyntheticDevice, REFERENCE_VARIANTS,
};
use hwnas_core::predictor::{
    grad_check, split_pairs, train, Hyper, LabeledPair, PredictorModel, DEFAULT_TRAIN_FRACTION,
};
use hwnas_core::rng_from_seed;
use hwnas_core::space::{
    build_default_space, enumerate_genomes, enumerate_lut_blocks, init_uniform_distribution,
    lut_census, sample_subnet, AttentionChoices, Categorical, EmbedChoices, SamplingDistribution,
    SearchSpace,
};
use hwnas_core::subnet::{count_params, Activation, FfnType};
use num_bigint::BigUint;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};
use tempfile::tempdir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

fn binom(n: u64, k: u64) -> BigUint {
    (0..k).fold(big(1), |acc, i| acc * big(n - i) / big(i + 1))
}

/// Depth sum of an attention stage: every FFN block has 24 choices and any
/// subset of them may carry one of 6 attention blocks.
fn attention_stage(depths: std::ops::RangeInclusive<u64>) -> BigUint {
    depths
        .map(|n| {
            let placements: BigUint = (0..=n)
                .map(|m| num_traits::pow(big(6), m as usize) * binom(n, m))
                .sum();
            num_traits::pow(big(24), n as usize) * placements
        })
        .sum()
}

fn cardinality() -> Outcome {
    let dir = tempdir().unwrap();
    let t = Instant::now();
    let out = common::ok(dir.path(), "space count");
    let took = t.elapsed();
    let plain: BigUint = (2..=3u64)
        .map(|n| num_traits::pow(big(24), n as usize))
        .sum();
    let expected = big(4u64.pow(4))
        * big(2)
        * &plain
        * &plain
        * attention_stage(6..=9)
        * big(6)
        * attention_stage(4..=6);
    let printed = out.lines().next().unwrap_or_default().to_string();
    let magnitude = printed.len() - 1;
    check(
        printed == expected.to_string() && magnitude == 45 && took < Duration::from_secs(1),
        format!("{printed} (10^{magnitude}), cli {took:.2?}"),
    )
}

fn census() -> Outcome {
    let space = build_default_space();
    let got: Vec<usize> = lut_census(&space).iter().map(|r| r.count()).collect();
    let table = [8, 96, 16, 96, 16, 24, 96, 96, 24, 96];
    let total = enumerate_lut_blocks(&space).len();
    check(
        got == table && total == 568,
        format!("{total} blocks, rows {got:?}"),
    )
}

fn restrict(
    space: &mut SearchSpace,
    stage: usize,
    widths: &[u32],
    depths: &[usize],
    ffn: &[FfnType],
) {
    let cs = &mut space.stages[stage];
    cs.widths = widths.to_vec();
    cs.depths = depths.to_vec();
    cs.ffn_types = ffn.to_vec();
    cs.expansions = vec![4];
    cs.kernels = vec![3];
    cs.activations = vec![Activation::Relu];
    if let Some(a) = cs.mhsa.as_mut() {
        *a = AttentionChoices {
            expansions: vec![4],
            activations: vec![Activation::Relu],
        };
    }
}

/// 81 920 subnets with attention in the last two stages.
fn medium_space() -> SearchSpace {
    use FfnType::{Fused, Unified};
    let mut s = build_default_space();
    s.stem.activations = vec![Activation::Relu];
    restrict(&mut s, 0, &[24, 28], &[2], &[Fused, Unified]);
    restrict(&mut s, 1, &[48], &[2], &[Unified]);
    restrict(&mut s, 2, &[96, 108], &[2, 3], &[Fused, Unified]);
    restrict(&mut s, 3, &[176, 200], &[2], &[Fused, Unified]);
    s.embeds[2] = EmbedChoices::MhsaDownsample(AttentionChoices {
        expansions: vec![2, 4],
        activations: vec![Activation::Relu],
    });
    s.check().unwrap();
    s
}

fn reduced_spaces() -> Vec<(&'static str, SearchSpace)> {
    use FfnType::{Fused, Unified};
    let medium = medium_space();

    let mut deep = medium.clone();
    deep.stem.activations = vec![Activation::Gelu, Activation::Relu];
    restrict(&mut deep, 0, &[24], &[1, 2, 3], &[Fused]);
    restrict(&mut deep, 1, &[40], &[1, 2], &[Unified]);
    restrict(&mut deep, 2, &[96], &[1, 2, 3, 4], &[Unified]);
    restrict(&mut deep, 3, &[176], &[1, 2, 3], &[Fused]);
    deep.embeds[2] = EmbedChoices::Conv;

    let mut wide = medium.clone();
    restrict(&mut wide, 0, &[24, 28, 32, 36], &[1], &[Fused, Unified]);
    wide.stages[0].expansions = vec![2, 3];
    wide.stages[0].kernels = vec![3, 5];
    wide.stages[0].activations = vec![Activation::Gelu, Activation::Relu];
    restrict(&mut wide, 1, &[40], &[1], &[Unified]);
    restrict(&mut wide, 2, &[96], &[1], &[Fused]);
    wide.stages[2].mhsa = Some(AttentionChoices {
        expansions: vec![2, 3, 4],
        activations: vec![Activation::Gelu, Activation::Relu],
    });
    restrict(&mut wide, 3, &[176, 200], &[1], &[Fused]);
    wide.stages[3].mhsa = None;

    let mut conv_only = medium.clone();
    for cs in &mut conv_only.stages {
        cs.mhsa = None;
    }
    conv_only.embeds[2] = EmbedChoices::Conv;
    restrict(
        &mut conv_only,
        2,
        &[96, 108, 120],
        &[2, 3, 4],
        &[Fused, Unified],
    );

    let mut tiny = medium.clone();
    restrict(&mut tiny, 0, &[24], &[2], &[Fused]);
    restrict(&mut tiny, 2, &[96], &[2], &[Unified]);
    tiny.stages[2].expansions = vec![2, 3, 4];
    tiny.stages[2].mhsa = None;
    restrict(&mut tiny, 3, &[176], &[2], &[Fused, Unified]);

    let out = vec![
        ("medium", medium),
        ("deep", deep),
        ("wide", wide),
        ("conv_only", conv_only),
        ("tiny", tiny),
    ];
    for (name, s) in &out {
        s.check().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    out
}

fn count_vs_enumeration() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, space) in reduced_spaces() {
        let count = space.count_subnets();
        let listed = enumerate_genomes(&space, 1_000_000)
            .map_err(|e| e.to_string())?
            .count();
        ok &= count == big(listed as u64) && count <= big(1_000_000);
        parts.push(format!("{name} {count}/{listed}"));
    }
    check(ok, parts.join(", "))
}

fn random_distribution(space: &SearchSpace, seed: u64) -> SamplingDistribution {
    let mut rng = rng_from_seed(seed);
    let mut d = init_uniform_distribution(space);
    for v in d.vectors_mut() {
        let mut w: Vec<f64> = (0..v.len())
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        *v = Categorical::from_counts(&w).unwrap();
    }
    d
}

fn simplex() -> Outcome {
    let space = build_default_space();
    let mut rng = rng_from_seed(2024);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for i in 0..1000u64 {
        let p = random_distribution(&space, 2 * i);
        let q = random_distribution(&space, 2 * i + 1);
        let r = evolve_distribution(&p, &q, rng.random::<f64>()).map_err(|e| e.to_string())?;
        for v in r.vectors() {
            negative += v.0.iter().filter(|&&x| x < 0.0).count();
            worst = worst.max((v.sum() - 1.0).abs());
        }
    }
    check(
        negative == 0 && worst <= 1e-9,
        format!("1000 updates, max |sum - 1| = {worst:.1e}, negative entries {negative}"),
    )
}

fn calibration() -> Outcome {
    let space = build_default_space();
    let profile = make_standard_profiles().gpu_like;
    let (kappa, epsilon) = (1.5, 5.0);
    let device = SyntheticDevice {
        profile: profile.clone(),
        kappa,
        epsilon,
        noise_rel: 0.01,
    };
    let est = synthetic_estimator(&space, &profile).map_err(|e| e.to_string())?;
    let fit = calibrate(&est.lut, &calibration_pairs(&space, &device, 2000, 3))
        .map_err(|e| e.to_string())?;
    let dk = (fit.kappa - kappa).abs() / kappa;
    let de = (fit.epsilon - epsilon).abs() / epsilon;
    let calibrated = LatencyEstimator {
        lut: est.lut,
        calib: fit,
    };
    let dist = init_uniform_distribution(&space);
    let (mut guess, mut truth) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let arch = sample_subnet(&space, &dist, 50_000 + i);
        guess.push(calibrated.estimate(&arch).map_err(|e| e.to_string())?);
        truth.push(device.noiseless(&arch));
    }
    let rho = spearman(&guess, &truth).unwrap();
    check(
        dk <= 0.02 && de <= 0.02 && rho >= 0.99,
        format!(
            "kappa err {:.3}%, epsilon err {:.3}%, held-out spearman {rho:.4}",
            dk * 100.0,
            de * 100.0
        ),
    )
}

fn predictor() -> Outcome {
    let space = build_default_space();
    let oracle = AccuracyOracle::default();
    let dist = init_uniform_distribution(&space);
    let pairs: Vec<LabeledPair> = (0..6000u64)
        .map(|i| {
            let arch = sample_subnet(&space, &dist, i);
            LabeledPair {
                accuracy: oracle.accuracy(&arch),
                arch,
            }
        })
        .collect();
    let (tr, va) = split_pairs(&pairs, DEFAULT_TRAIN_FRACTION);
    let hyper = Hyper::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (report, fresh_err, trained_err) = pool.install(|| -> Result<_, String> {
        let fresh = PredictorModel::init(&space, &hyper).map_err(|e| e.to_string())?;
        let fresh_err = grad_check(&fresh, &tr[..16]).map_err(|e| e.to_string())?;
        let report = train(&space, tr, va, &hyper).map_err(|e| e.to_string())?;
        let trained_err = grad_check(&report.model, &tr[..16]).map_err(|e| e.to_string())?;
        Ok((report, fresh_err, trained_err))
    })?;
    let rho = report.model.best_val_spearman;
    let err = fresh_err.max(trained_err);
    check(
        tr.len() == 5000 && va.len() == 1000 && rho >= 0.9 && err < 1e-4,
        format!(
            "{}/{} split, validation spearman {rho:.4} at epoch {}, grad check {err:.1e}",
            tr.len(),
            va.len(),
            report.model.best_epoch
        ),
    )
}

fn latency_bound(est: LatencyEstimator, bound: f64) -> ConstraintSet {
    ConstraintSet::new(
        vec![Constraint {
            metric: Metric::LatencyMs,
            bound,
        }],
        Some(est),
    )
    .unwrap()
}

fn optimality() -> Outcome {
    let space = medium_space();
    let est = synthetic_estimator(&space, &make_standard_profiles().cpu_like).unwrap();
    let bound = latency_quantile(&space, &est, 2000, 0.5, 0).unwrap();
    let cs = latency_bound(est, bound);
    let oracle = AccuracyOracle::default();
    let bf = brute_force_best(&space, |a| oracle.accuracy(a), &cs, 1_000_000)
        .map_err(|e| e.to_string())?;
    let best = bf.best_value.ok_or("no feasible subnet")?;
    let mut hits = 0;
    let mut worst_ratio: f64 = 1.0;
    let mut slowest = Duration::ZERO;
    for seed in 0..10 {
        let t = Instant::now();
        let cfg = SearchConfig {
            seed,
            total_gen: 20,
            ..SearchConfig::default()
        };
        let out = search(&space, &cfg, &cs, &oracle).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        let ratio = out.best.predicted / best;
        worst_ratio = worst_ratio.min(ratio);
        hits += usize::from(ratio >= 0.99);
    }
    check(
        hits >= 9 && slowest < Duration::from_secs(300),
        format!(
            "{} subnets, {} feasible, {hits}/10 seeds within 1%, worst ratio {worst_ratio:.4}, slowest seed {slowest:.2?}",
            space.count_subnets(),
            bf.feasible
        ),
    )
}

fn sampling_efficiency() -> Outcome {
    let space = build_default_space();
    let est = synthetic_estimator(&space, &make_standard_profiles().cpu_like).unwrap();
    let bound = latency_quantile(&space, &est, 20_000, 0.015, 0).unwrap();
    let cs = latency_bound(est, bound);
    let uniform = init_uniform_distribution(&space);
    let base = acceptance_rate(&space, &uniform, &cs, 20_000, 99).map_err(|e| e.to_string())?;
    let cfg = SearchConfig {
        seed: 1,
        total_gen: 20,
        ..SearchConfig::default()
    };
    let out = search(&space, &cfg, &cs, &AccuracyOracle::default()).map_err(|e| e.to_string())?;
    let tenth = out
        .events
        .get(9)
        .ok_or(format!("only {} evolution steps", out.events.len()))?;
    let rate =
        acceptance_rate(&space, &tenth.distribution, &cs, 20_000, 99).map_err(|e| e.to_string())?;
    let (before, after) = (attempts_per_accept(base), attempts_per_accept(rate));
    check(
        base <= 0.02 && after * 5.0 <= before,
        format!(
            "bound {bound:.1} ms, static acceptance {:.2}%, attempts per accept {before:.1} -> {after:.2} ({:.1}x)",
            base * 100.0,
            before / after
        ),
    )
}

fn adaptivity() -> Outcome {
    let report =
        adapt_study(&build_default_space(), &AdaptStudy::default()).map_err(|e| e.to_string())?;
    let pairs: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}/{}", r.hostile_mhsa, r.friendly_mhsa))
        .collect();
    check(
        report.majority(),
        format!(
            "hostile fewer in {}/{} seeds, hostile/friendly MHSA {}",
            report.hostile_fewer(),
            report.rows.len(),
            pairs.join(" ")
        ),
    )
}

/// Measured end-to-end latency of the five reference variants, in the order
/// of the variant list, per device.
const MEASURED: [(&str, [f64; 5]); 3] = [
    ("cpu_like", [190.3, 168.7, 105.6, 237.6, 187.7]),
    ("gpu_like", [21.4, 18.1, 18.3, 26.2, 22.3]),
    ("vpu_like", [47.0, 42.1, 30.6, 36.6, 26.6]),
];

fn ranks(xs: &[f64]) -> Vec<usize> {
    xs.iter()
        .map(|x| xs.iter().filter(|&y| y < x).count())
        .collect()
}

fn reference_ordering() -> Outcome {
    let space = build_default_space();
    let profiles = make_standard_profiles();
    let mut agree = 0;
    let mut parts = Vec::new();
    for (device, measured) in MEASURED {
        let profile = profiles.get(device).ok_or(format!("no profile {device}"))?;
        let synthetic: Vec<f64> = REFERENCE_VARIANTS
            .iter()
            .map(|v| synthetic_latency(&reference_arch(&space, v), profile))
            .collect();
        let (want, got) = (ranks(&measured), ranks(&synthetic));
        agree += want.iter().zip(&got).filter(|(a, b)| a == b).count();
        parts.push(format!("{device} {got:?}"));
    }
    check(
        agree == 15,
        format!("{agree}/15 ranks agree: {}", parts.join(", ")),
    )
}

fn joint_constraints() -> Outcome {
    let space = build_default_space();
    let profile = make_standard_profiles().gpu_like;
    let device = SyntheticDevice {
        profile: profile.clone(),
        kappa: 0.9,
        epsilon: 0.5,
        noise_rel: 0.01,
    };
    let raw = synthetic_estimator(&space, &profile).map_err(|e| e.to_string())?;
    let fit = calibrate(&raw.lut, &calibration_pairs(&space, &device, 500, 8))
        .map_err(|e| e.to_string())?;
    let est = LatencyEstimator {
        lut: raw.lut,
        calib: fit,
    };
    let (lat, params) = (20.0, 5e6);
    let cs = ConstraintSet::new(
        vec![
            Constraint {
                metric: Metric::LatencyMs,
                bound: lat,
            },
            Constraint {
                metric: Metric::Params,
                bound: params,
            },
        ],
        Some(est.clone()),
    )
    .unwrap();
    let cfg = SearchConfig {
        seed: 0,
        total_gen: 10,
        ..SearchConfig::default()
    };
    let out = search(&space, &cfg, &cs, &AccuracyOracle::default()).map_err(|e| e.to_string())?;
    let got_lat = est.estimate(&out.best.arch).map_err(|e| e.to_string())?;
    let got_params = count_params(&out.best.arch);
    check(
        got_lat < lat && (got_params as f64) < params,
        format!(
            "latency {got_lat:.2} < {lat} ms, params {got_params} < {params:e}, accuracy {:.4}",
            out.best.predicted
        ),
    )
}

fn determinism() -> Outcome {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let first = common::pipeline(a.path());
    let second = common::pipeline(b.path());
    let differing: Vec<&String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && first.len() == second.len(),
        format!("{} outputs compared, differing {differing:?}", first.len()),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("cardinality", Duration::from_secs(1), cardinality),
        ("lut census", Duration::from_secs(1), census),
        (
            "count vs enumeration",
            Duration::from_secs(60),
            count_vs_enumeration,
        ),
        (
            "distribution update stays on the simplex",
            Duration::from_secs(1),
            simplex,
        ),
        ("calibration recovery", Duration::from_secs(10), calibration),
        ("predictor quality", Duration::from_secs(300), predictor),
        ("search optimality", Duration::from_secs(3000), optimality),
        (
            "sampling efficiency",
            Duration::from_secs(120),
            sampling_efficiency,
        ),
        ("device adaptivity", Duration::from_secs(600), adaptivity),
        (
            "reference ordering",
            Duration::from_secs(1),
            reference_ordering,
        ),
        (
            "joint constraints",
            Duration::from_secs(300),
            joint_constraints,
        ),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let took = t.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget {budget:?}")),
            Err(d) => (false, d),
        };
        println!(
            "{} {:2} {name}: {detail} [{took:.2?}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
        if !pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
