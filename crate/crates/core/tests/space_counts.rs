mod common;

use hwnas_core::rng_for;
use hwnas_core::space::{
    build_default_space, enumerate_genomes, enumerate_lut_blocks, init_uniform_distribution,
    lut_census, sample_genome, validate, ChoiceSet, EmbedChoices, SearchSpace,
};
use num_bigint::BigUint;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

fn pow(b: u64, e: u32) -> BigUint {
    num_traits::pow(big(b), e as usize)
}

#[test]
fn default_cardinality_matches_closed_form() {
    // 4^4 widths, 2 stem activations, 24 FFN choices per block, 6 choices
    // per MHSA and 6 for the downsampling embed.
    let s12: BigUint = (2..=3).map(|n| pow(24, n)).sum();
    let s3: BigUint = (6..=9).map(|n| pow(24 * 7, n)).sum();
    let s4: BigUint = (4..=6).map(|n| pow(24 * 7, n)).sum();
    let expected = pow(4, 4) * big(2) * &s12 * &s12 * s3 * big(6) * s4;
    let got = build_default_space().count_subnets();
    assert_eq!(got, expected);
    assert_eq!(got.to_string().len() - 1, 45);
    assert_eq!(
        got.to_string(),
        "1545151082403742135368496453992459534336000000"
    );
}

#[test]
fn census_matches_the_table() {
    let space = build_default_space();
    let rows: Vec<(String, usize)> = lut_census(&space)
        .into_iter()
        .map(|r| (r.label.clone(), r.count()))
        .collect();
    let expected = [8, 96, 16, 96, 16, 24, 96, 96, 24, 96];
    assert_eq!(rows.iter().map(|r| r.1).collect::<Vec<_>>(), expected);
    assert_eq!(enumerate_lut_blocks(&space).len(), 568);
    let distinct: HashSet<_> = enumerate_lut_blocks(&space).into_iter().collect();
    assert_eq!(distinct.len(), 568);
}

/// Slot sequences of one stage at one width, counted by walking every
/// combination of choices.
fn walk_stage(cs: &ChoiceSet) -> u64 {
    let ffn = cs.ffn_types.len() * cs.expansions.len() * cs.kernels.len() * cs.activations.len();
    let attn = cs
        .mhsa
        .as_ref()
        .map_or(0, |a| a.expansions.len() * a.activations.len());
    let per_slot = (ffn * (1 + attn)) as u64;
    let mut total = 0;
    for &d in &cs.depths {
        let mut digits = vec![0u64; d];
        loop {
            total += 1;
            let mut i = 0;
            while i < d {
                digits[i] += 1;
                if digits[i] < per_slot {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
    }
    total * cs.widths.len() as u64
}

fn walk_space(space: &SearchSpace) -> u64 {
    let mut n = space.stem.activations.len() as u64;
    for cs in &space.stages {
        n *= walk_stage(cs);
    }
    for e in &space.embeds {
        n *= match e {
            EmbedChoices::Conv => 1,
            EmbedChoices::MhsaDownsample(a) => (a.expansions.len() * a.activations.len()) as u64,
        };
    }
    n
}

#[test]
fn enumeration_matches_count_on_reduced_spaces() {
    for (name, json) in common::REDUCED {
        let space = common::space(json);
        let count = space.count_subnets();
        assert!(count <= big(1_000_000), "{name} too large");
        assert_eq!(count, big(walk_space(&space)), "{name}");
        let mut seen = HashSet::new();
        for g in enumerate_genomes(&space, 1_000_000).unwrap() {
            let mut h = DefaultHasher::new();
            g.hash(&mut h);
            assert!(seen.insert(h.finish()), "{name}: duplicate subnet");
        }
        assert_eq!(big(seen.len() as u64), count, "{name}");
    }
}

#[test]
fn enumerated_subnets_validate() {
    let space = common::space(common::DEEP);
    for g in enumerate_genomes(&space, 1_000_000).unwrap() {
        validate(&space, &g.to_arch(&space)).unwrap();
    }
}

#[test]
fn uniform_sampling_frequencies() {
    let space = build_default_space();
    let dist = init_uniform_distribution(&space);
    let n = 100_000u64;
    let mut widths = vec![vec![0u64; 4]; 4];
    let mut stem = [0u64; 2];
    for i in 0..n {
        let g = sample_genome(&space, &dist, &mut rng_for(11, 0, i));
        validate(&space, &g.to_arch(&space)).unwrap();
        stem[space
            .stem
            .activations
            .iter()
            .position(|&a| a == g.stem_activation)
            .unwrap()] += 1;
        for (s, st) in g.stages.iter().enumerate() {
            widths[s][space.stages[s]
                .widths
                .iter()
                .position(|&w| w == st.width)
                .unwrap()] += 1;
        }
    }
    let within = |count: u64, k: usize| {
        let p = 1.0 / k as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - n as f64 * p).abs() <= 3.0 * sigma
    };
    assert!(stem.iter().all(|&c| within(c, 2)), "{stem:?}");
    for w in &widths {
        assert!(w.iter().all(|&c| within(c, 4)), "{w:?}");
    }
}
