mod common;

use hwnas_core::evolution::evolve_distribution;
use hwnas_core::latency::{calibrate, CalibrationPair};
use hwnas_core::oracle::{make_standard_profiles, synthetic_estimator};
use hwnas_core::space::{
    build_default_space, init_uniform_distribution, sample_genome, validate, Categorical,
    SamplingDistribution, SearchSpace,
};
use hwnas_core::stats::spearman;
use hwnas_core::subnet::{count_flops, count_params, crossover, decode, encode, mutate};
use hwnas_core::{rng_for, rng_from_seed};
use proptest::prelude::*;
use rand::Rng;
use std::sync::LazyLock;

static SPACE: LazyLock<SearchSpace> = LazyLock::new(build_default_space);

/// A random distribution over `space`; some options get probability zero.
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
            let i = rng.random_range(0..w.len());
            w[i] = 1.0;
        }
        *v = Categorical::from_counts(&w).unwrap();
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evolution_stays_on_the_simplex(a in any::<u64>(), b in any::<u64>(), lambda in 0.0f64..=1.0) {
        let p = random_distribution(&SPACE, a);
        let q = random_distribution(&SPACE, b);
        let r = evolve_distribution(&p, &q, lambda).unwrap();
        for v in r.vectors() {
            prop_assert!(v.0.iter().all(|&x| x >= 0.0));
            prop_assert!((v.sum() - 1.0).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn encoding_round_trips(dist_seed in any::<u64>(), seed in any::<u64>()) {
        let d = random_distribution(&SPACE, dist_seed);
        let arch = sample_genome(&SPACE, &d, &mut rng_from_seed(seed)).to_arch(&SPACE);
        let enc = encode(&SPACE, &arch).unwrap();
        prop_assert_eq!(decode(&SPACE, &enc).unwrap(), arch);
    }

    #[test]
    fn encoding_is_injective(a in any::<u64>(), b in any::<u64>()) {
        let d = init_uniform_distribution(&SPACE);
        let x = sample_genome(&SPACE, &d, &mut rng_from_seed(a)).to_arch(&SPACE);
        let y = sample_genome(&SPACE, &d, &mut rng_from_seed(b)).to_arch(&SPACE);
        let (ex, ey) = (encode(&SPACE, &x).unwrap(), encode(&SPACE, &y).unwrap());
        prop_assert_eq!(x == y, ex == ey);
    }

    #[test]
    fn genetic_operators_stay_in_the_space(
        dist_seed in any::<u64>(),
        a in any::<u64>(),
        b in any::<u64>(),
        p_mut in 0.0f64..=1.0,
    ) {
        let d = random_distribution(&SPACE, dist_seed);
        let x = sample_genome(&SPACE, &d, &mut rng_from_seed(a)).to_arch(&SPACE);
        let y = sample_genome(&SPACE, &d, &mut rng_from_seed(b)).to_arch(&SPACE);
        let m = mutate(&SPACE, &x, &d, p_mut, a ^ b).unwrap();
        prop_assert!(validate(&SPACE, &m).is_ok());
        let c = crossover(&SPACE, &x, &y, a.wrapping_add(b)).unwrap();
        prop_assert!(validate(&SPACE, &c).is_ok());
        prop_assert_eq!(mutate(&SPACE, &x, &d, 0.0, 1).unwrap(), x.clone());
        prop_assert_eq!(crossover(&SPACE, &x, &x, 2).unwrap(), x);
    }

    #[test]
    fn extra_block_costs_more(seed in any::<u64>(), stage in 0usize..4) {
        let d = init_uniform_distribution(&SPACE);
        let mut g = sample_genome(&SPACE, &d, &mut rng_from_seed(seed));
        let max = SPACE.stages[stage].max_depth();
        prop_assume!(g.stages[stage].depth() < max);
        let small = g.to_arch(&SPACE);
        let last = *g.stages[stage].slots.last().unwrap();
        g.stages[stage].slots.push(last);
        let big = g.to_arch(&SPACE);
        prop_assert!(validate(&SPACE, &big).is_ok());
        prop_assert!(count_params(&big) > count_params(&small));
        prop_assert!(count_flops(&big) > count_flops(&small));
        for p in make_standard_profiles().all() {
            let est = synthetic_estimator(&SPACE, p).unwrap();
            prop_assert!(est.estimate(&big).unwrap() > est.estimate(&small).unwrap());
        }
    }

    #[test]
    fn calibration_recovers_an_exact_line(kappa in 0.1f64..10.0, epsilon in -5.0f64..5.0, seed in any::<u64>()) {
        let est = synthetic_estimator(&SPACE, &make_standard_profiles().gpu_like).unwrap();
        let d = init_uniform_distribution(&SPACE);
        let pairs: Vec<CalibrationPair> = (0..12)
            .map(|i| {
                let subnet = sample_genome(&SPACE, &d, &mut rng_for(seed, 0, i)).to_arch(&SPACE);
                let measured_ms = kappa * est.estimate(&subnet).unwrap() + epsilon;
                CalibrationPair { subnet, measured_ms }
            })
            .collect();
        let c = calibrate(&est.lut, &pairs).unwrap();
        prop_assert!((c.kappa - kappa).abs() <= 1e-9 * kappa.max(1.0));
        prop_assert!((c.epsilon - epsilon).abs() <= 1e-7);

        // Refitting on the calibrated estimates is the identity.
        let again: Vec<CalibrationPair> = pairs
            .iter()
            .map(|p| CalibrationPair { subnet: p.subnet.clone(), measured_ms: est.estimate(&p.subnet).unwrap() })
            .collect();
        let id = calibrate(&est.lut, &again).unwrap();
        prop_assert!((id.kappa - 1.0).abs() < 1e-9 && id.epsilon.abs() < 1e-9);
    }

    #[test]
    fn rank_correlation_ignores_monotone_maps_and_order(
        xs in prop::collection::vec(-1e3f64..1e3, 3..50),
        noise in prop::collection::vec(-1.0f64..1.0, 50),
        seed in any::<u64>(),
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, n)| x + 100.0 * n).collect();
        prop_assume!(xs.iter().any(|&x| x != xs[0]) && ys.iter().any(|&y| y != ys[0]));
        let base = spearman(&xs, &ys).unwrap();
        let mapped: Vec<f64> = xs.iter().map(|x| (x / 100.0).exp() * 3.0 + 1.0).collect();
        prop_assert!((spearman(&mapped, &ys).unwrap() - base).abs() < 1e-12);
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        let mut rng = rng_from_seed(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let px: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let py: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        prop_assert!((spearman(&px, &py).unwrap() - base).abs() < 1e-12);
        prop_assert!((spearman(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reduced_spaces_sample_inside_themselves() {
    for (name, json) in common::REDUCED {
        let space = common::space(json);
        let d = random_distribution(&space, 9);
        for i in 0..200 {
            let arch = sample_genome(&space, &d, &mut rng_for(1, 0, i)).to_arch(&space);
            assert!(validate(&space, &arch).is_ok(), "{name}");
        }
    }
}
