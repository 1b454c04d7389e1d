//! Published searched architectures, transcribed block by block, must be
//! members of the default space.

use hwnas_core::space::{build_default_space, validate, Genome, SearchSpace};
use hwnas_core::subnet::{encode, Activation, BlockKind, BlockSpec, SubnetArch};

/// Stage lines: `width | block block ...` with blocks `F e/k/a`, `U e/k/a`,
/// `M e/a`. Embed lines: `width` for a plain conv, `width DS e/a` for the
/// attention downsampling layer. Order: stem, s1, e1, s2, e2, s3, e3, s4.
struct Fixture {
    name: &'static str,
    stem: (u32, char),
    lines: [&'static str; 7],
    mhsa: [usize; 2],
}

const FIXTURES: [Fixture; 6] = [
    Fixture {
        name: "cortex@150ms",
        stem: (32, 'R'),
        lines: [
            "32 | F 2/3/R F 2/3/R",
            "40",
            "40 | F 2/3/R F 2/3/R",
            "96",
            "96 | U 3/3/R M 2/R U 3/3/R M 2/R F 2/3/R M 2/R U 4/3/R U 2/5/R M 2/R U 3/3/R",
            "248 DS 4/R",
            "248 | M 2/R F 3/3/R M 2/G F 3/3/G M 2/R U 3/3/R M 2/G F 3/3/G",
        ],
        mhsa: [4, 4],
    },
    Fixture {
        name: "cortex@150ms_5M",
        stem: (32, 'R'),
        lines: [
            "32 | F 3/3/R F 3/3/R",
            "64",
            "64 | U 2/3/R F 2/3/R",
            "96",
            "96 | U 3/5/R M 2/R U 3/5/R M 2/R U 3/5/R M 2/R U 4/5/R U 4/5/R M 2/R U 3/5/R",
            "224 DS 4/R",
            "224 | M 2/G U 3/5/G M 2/G U 3/5/G M 2/R U 4/5/R M 2/R U 3/5/R",
        ],
        mhsa: [4, 4],
    },
    Fixture {
        name: "cortex@95ms",
        stem: (24, 'R'),
        lines: [
            "24 | F 2/3/R F 2/3/R",
            "40",
            "40 | U 2/3/R F 2/3/R",
            "96",
            "96 | U 3/3/R M 2/R U 3/3/R M 2/R U 3/3/R M 2/R U 4/3/R U 2/3/R M 2/R U 3/3/R",
            "224 DS 2/R",
            "224 | M 2/R U 3/3/R M 2/R U 3/3/R M 2/R U 3/3/R M 2/R U 3/3/R",
        ],
        mhsa: [4, 4],
    },
    Fixture {
        name: "nano_trt@20ms",
        stem: (32, 'R'),
        lines: [
            "32 | F 3/3/R F 3/3/R",
            "64",
            "64 | F 3/3/G F 3/3/G",
            "96",
            "96 | F 3/3/R F 3/3/R F 3/3/R F 3/3/R F 3/3/G F 3/3/G F 3/3/R F 3/3/G F 3/3/G",
            "224 DS 2/G",
            "224 | F 3/3/G M 2/G F 3/3/G F 3/3/G F 3/3/G F 3/3/R M 2/G F 3/3/G",
        ],
        mhsa: [0, 2],
    },
    Fixture {
        name: "nano_trt@20ms_5M",
        stem: (32, 'R'),
        lines: [
            "32 | F 4/3/G F 3/3/R",
            "64",
            "64 | F 2/3/G F 2/3/G",
            "120",
            "120 | U 3/5/R U 3/5/R M 2/G U 2/5/G U 2/5/R M 2/G U 3/5/G U 3/5/R",
            "248 DS 2/R",
            "248 | M 2/G U 3/5/G M 2/G U 3/5/G U 3/5/G M 2/R U 3/5/R",
        ],
        mhsa: [2, 3],
    },
    Fixture {
        name: "nano_trt@13ms",
        stem: (32, 'R'),
        lines: [
            "32 | U 2/3/R F 3/3/R",
            "64",
            "64 | U 2/3/R U 2/3/R",
            "96",
            "96 | F 3/3/R F 3/3/R F 3/3/R F 3/3/R F 3/3/G F 3/3/G",
            "224 DS 2/R",
            "224 | M 2/R F 2/3/R F 2/3/G M 2/G F 3/3/G F 2/3/G",
        ],
        mhsa: [0, 2],
    },
];

fn act(c: &str) -> Activation {
    match c {
        "G" => Activation::Gelu,
        "R" => Activation::Relu,
        other => panic!("activation {other}"),
    }
}

fn nums(s: &str) -> Vec<&str> {
    s.split('/').collect()
}

fn build(space: &SearchSpace, f: &Fixture) -> SubnetArch {
    let res = |s: usize| space.input_resolution >> (2 + s);
    let mut blocks = vec![BlockSpec {
        stage: 0,
        kind: BlockKind::Stem,
        in_width: 3,
        out_width: f.stem.0,
        expansion: None,
        kernel: Some(3),
        activation: Some(act(&f.stem.1.to_string())),
        resolution: res(0),
    }];
    let mut width = f.stem.0;
    for (i, line) in f.lines.iter().enumerate() {
        let stage = i.div_ceil(2);
        let r = res(stage);
        if i % 2 == 1 {
            let mut tok = line.split_whitespace();
            let out: u32 = tok.next().unwrap().parse().unwrap();
            let block = match tok.next() {
                None => BlockSpec {
                    stage,
                    kind: BlockKind::Embed,
                    in_width: width,
                    out_width: out,
                    expansion: None,
                    kernel: Some(3),
                    activation: None,
                    resolution: r,
                },
                Some("DS") => {
                    let p = nums(tok.next().unwrap());
                    BlockSpec {
                        stage,
                        kind: BlockKind::MhsaDownsample,
                        in_width: width,
                        out_width: out,
                        expansion: Some(p[0].parse().unwrap()),
                        kernel: None,
                        activation: Some(act(p[1])),
                        resolution: r,
                    }
                }
                Some(other) => panic!("embed {other}"),
            };
            blocks.push(block);
            width = out;
            continue;
        }
        let (w, body) = line.split_once('|').unwrap();
        let w: u32 = w.trim().parse().unwrap();
        assert_eq!(w, width, "{}: stage {stage} width", f.name);
        let tok: Vec<&str> = body.split_whitespace().collect();
        for pair in tok.chunks(2) {
            let p = nums(pair[1]);
            let (kind, kernel, a) = match pair[0] {
                "F" => (BlockKind::FusedFfn, Some(p[1].parse().unwrap()), p[2]),
                "U" => (BlockKind::UnifiedFfn, Some(p[1].parse().unwrap()), p[2]),
                "M" => (BlockKind::Mhsa, None, p[1]),
                other => panic!("block {other}"),
            };
            blocks.push(BlockSpec {
                stage,
                kind,
                in_width: width,
                out_width: width,
                expansion: Some(p[0].parse().unwrap()),
                kernel,
                activation: Some(act(a)),
                resolution: r,
            });
        }
    }
    blocks.push(BlockSpec {
        stage: 3,
        kind: BlockKind::OutputHead,
        in_width: width,
        out_width: space.num_classes,
        expansion: None,
        kernel: None,
        activation: None,
        resolution: 1,
    });
    SubnetArch {
        input_resolution: space.input_resolution,
        blocks,
    }
}

#[test]
fn searched_architectures_are_members() {
    let space = build_default_space();
    for f in &FIXTURES {
        let arch = build(&space, f);
        validate(&space, &arch).unwrap_or_else(|v| panic!("{}: {v:?}", f.name));
        let g = Genome::from_arch(&space, &arch).unwrap();
        assert_eq!(g.stages[2].mhsa_count(), f.mhsa[0], "{}", f.name);
        assert_eq!(g.stages[3].mhsa_count(), f.mhsa[1], "{}", f.name);
        assert_eq!(g.to_arch(&space), arch, "{}", f.name);
        encode(&space, &arch).unwrap();
    }
}

#[test]
fn perturbed_fixtures_are_rejected() {
    let space = build_default_space();
    let base = build(&space, &FIXTURES[0]);

    let mut k7 = base.clone();
    let i = k7
        .blocks
        .iter()
        .position(|b| b.kind == BlockKind::FusedFfn)
        .unwrap();
    k7.blocks[i].kernel = Some(7);
    assert!(validate(&space, &k7).is_err());

    // Five attention blocks over four FFNs in the last stage.
    let mut extra = base.clone();
    let at = extra.blocks.len() - 1;
    let m = *extra
        .blocks
        .iter()
        .rev()
        .find(|b| b.kind == BlockKind::Mhsa)
        .unwrap();
    extra.blocks.insert(at, m);
    assert!(validate(&space, &extra).is_err());

    let mut odd = base.clone();
    let i = odd
        .blocks
        .iter()
        .position(|b| b.kind == BlockKind::Embed)
        .unwrap();
    odd.blocks[i].out_width = 44;
    assert!(validate(&space, &odd).is_err());
}
