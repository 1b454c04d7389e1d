mod common;

use hwnas_core::evolution::{search, Constraint, ConstraintSet, Metric, SearchConfig, SearchError};
use hwnas_core::latency::{calibrate, spearman};
use hwnas_core::oracle::{
    brute_force_best, calibration_pairs, latency_quantile, make_standard_profiles,
    synthetic_estimator, AccuracyOracle, SyntheticDevice,
};
use hwnas_core::space::{build_default_space, init_uniform_distribution, sample_subnet};
use hwnas_core::subnet::count_params;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

#[test]
fn search_ignores_thread_count() {
    let space = build_default_space();
    let est = synthetic_estimator(&space, &make_standard_profiles().gpu_like).unwrap();
    let cs = ConstraintSet::new(
        vec![Constraint {
            metric: Metric::LatencyMs,
            bound: 30.0,
        }],
        Some(est),
    )
    .unwrap();
    let oracle = AccuracyOracle::default();
    let cfg = SearchConfig {
        seed: 4,
        total_gen: 5,
        ..SearchConfig::default()
    };
    let one = pool(1).install(|| search(&space, &cfg, &cs, &oracle).unwrap());
    let four = pool(4).install(|| search(&space, &cfg, &cs, &oracle).unwrap());
    assert_eq!(one, four);
}

#[test]
fn bound_below_the_fastest_subnet_is_infeasible() {
    let space = common::space(common::TINY);
    let profile = make_standard_profiles().cpu_like;
    let loose = common::latency_bound(&space, &profile, 1e9);
    let bf = brute_force_best(&space, |_| 0.0, &loose, 1_000_000).unwrap();
    let min = bf.min_latency_ms.unwrap();
    let cs = common::latency_bound(&space, &profile, 0.5 * min);
    let cfg = SearchConfig {
        max_sample_attempts: 5_000,
        ..SearchConfig::default()
    };
    let err = search(&space, &cfg, &cs, &AccuracyOracle::default()).unwrap_err();
    assert!(
        matches!(err, SearchError::InfeasibleConstraints { .. }),
        "{err}"
    );
}

#[test]
fn joint_bounds_hold_strictly() {
    let space = build_default_space();
    let est = synthetic_estimator(&space, &make_standard_profiles().gpu_like).unwrap();
    let cs = ConstraintSet::new(
        vec![
            Constraint {
                metric: Metric::LatencyMs,
                bound: 20.0,
            },
            Constraint {
                metric: Metric::Params,
                bound: 5e6,
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
    let out = search(&space, &cfg, &cs, &AccuracyOracle::default()).unwrap();
    for m in &out.population {
        assert!(est.estimate(&m.arch).unwrap() < 20.0);
        assert!((count_params(&m.arch) as f64) < 5e6);
    }
}

#[test]
fn calibration_recovers_a_noisy_device() {
    let space = build_default_space();
    let profile = make_standard_profiles().gpu_like;
    let (kappa, epsilon) = (1.5, 5.0);
    let device = SyntheticDevice {
        profile: profile.clone(),
        kappa,
        epsilon,
        noise_rel: 0.01,
    };
    let est = synthetic_estimator(&space, &profile).unwrap();
    let fit = calibrate(&est.lut, &calibration_pairs(&space, &device, 2000, 3)).unwrap();
    assert!((fit.kappa - kappa).abs() / kappa <= 0.02, "{fit:?}");
    assert!((fit.epsilon - epsilon).abs() / epsilon <= 0.02, "{fit:?}");

    let calibrated = hwnas_core::evolution::LatencyEstimator {
        lut: est.lut,
        calib: fit,
    };
    let dist = init_uniform_distribution(&space);
    let (mut guess, mut truth) = (Vec::new(), Vec::new());
    for i in 0..100 {
        let arch = sample_subnet(&space, &dist, 50_000 + i);
        guess.push(calibrated.estimate(&arch).unwrap());
        truth.push(device.noiseless(&arch));
    }
    assert!(spearman(&guess, &truth).unwrap() >= 0.99);
}

#[test]
fn search_finds_the_optimum_of_a_medium_space() {
    let space = common::space(common::MEDIUM);
    let profile = make_standard_profiles().cpu_like;
    let est = synthetic_estimator(&space, &profile).unwrap();
    let bound = latency_quantile(&space, &est, 2000, 0.5, 0).unwrap();
    let cs = common::latency_bound(&space, &profile, bound);
    let oracle = AccuracyOracle::default();
    let bf = brute_force_best(&space, |a| oracle.accuracy(a), &cs, 1_000_000).unwrap();
    let best = bf.best_value.unwrap();
    for seed in 0..3 {
        let cfg = SearchConfig {
            seed,
            total_gen: 20,
            ..SearchConfig::default()
        };
        let out = search(&space, &cfg, &cs, &oracle).unwrap();
        assert!(out.best.predicted <= best + 1e-12);
        assert!(out.best.predicted >= 0.99 * best, "seed {seed}");
    }
}
