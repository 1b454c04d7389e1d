#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// 576 subnets.
pub const TINY: &str = r#"{
  "stem": {"activations": ["relu"]},
  "stages": [
    {"widths": [24, 24, 4], "depths": [2], "ffn_types": ["fused"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [40, 48, 8], "depths": [2], "ffn_types": ["unified"], "expansions": [4], "kernels": [3], "activations": ["relu"]},
    {"widths": [96, 96, 12], "depths": [2], "ffn_types": ["unified"], "expansions": [2, 3, 4], "kernels": [3], "activations": ["relu"], "mhsa": false},
    {"widths": [176, 176, 24], "depths": [2], "ffn_types": ["fused", "unified"], "expansions": [4], "kernels": [3], "activations": ["relu"], "mhsa_expansions": [2], "mhsa_activations": ["relu"]}
  ],
  "embeds": [{"kind": "conv"}, {"kind": "conv"}, {"kind": "mhsa_downsample", "expansions": [2, 4], "activations": ["relu"]}]
}"#;

/// Runs `hwnas` in `dir`; `cmd` is split on whitespace.
pub fn hwnas(dir: &Path, cmd: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwnas"))
        .args(cmd.split_whitespace())
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

/// Runs a command that must succeed and returns its standard output.
pub fn ok(dir: &Path, cmd: &str) -> String {
    let out = hwnas(dir, cmd);
    assert!(
        out.status.success(),
        "hwnas {cmd}: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

pub fn code(dir: &Path, cmd: &str) -> i32 {
    hwnas(dir, cmd).status.code().expect("exit code")
}

pub fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every command, small sizes, in `dir`. Returns each command's standard
/// output and every file written, keyed by name. Manifests lose their
/// timing field.
pub fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::write(dir.join("tiny.json"), TINY).unwrap();
    let steps = [
        "space count",
        "space census",
        "space sample --n 20 --seed 3 --out sample.jsonl",
        "space enumerate --space tiny.json --out enum.jsonl",
        "oracle profiles --out profiles.json",
        "oracle reference --out reference.csv",
        "oracle gen-lut --profile gpu_like --out meas.json",
        "oracle gen-lut --profile cpu_like --repeats 3 --jitter 0.05 --seed 1 --out meas_cpu.json",
        "lut build --measurements meas.json --out lut.json",
        "lut build --measurements meas_cpu.json --aggregation median --out lut_cpu.json",
        "oracle gen-pairs --profile gpu_like --kappa 2 --epsilon 3 --n 50 --seed 2 --out pairs.json",
        "lut calibrate --lut lut.json --pairs pairs.json --out calib.json",
        "lut estimate --lut lut.json --calib calib.json --subnets sample.jsonl --out estimate.csv",
        "lut proxy-report --lut lut_cpu.json --profile cpu_like --noise 0.01 --n 60 --seed 4 \
         --out-dir proxy",
        "predictor gen-data --n 600 --seed 5 --out data.json",
        "predictor train --data data.json --seed 1 --epochs 2 --out-dir model",
        "predictor eval --model model/model.json --data data.json --out-dir eval",
        "search run --lut lut.json --constraint latency_ms=20 --constraint params=5e6 --oracle \
         --seed 0 --generations 3 --out-dir joint",
        "search run --lut lut.json --calib calib.json --constraint latency_ms=70 \
         --model model/model.json --seed 1 --generations 2 --out-dir predicted",
        "search brute --space tiny.json --constraint params=4e6 --seed 0 --out-dir brute",
        "search adapt-study --seed 0 --seeds 2 --generations 2 --bound-samples 200 \
         --out-dir adapt",
    ];
    let mut outputs = BTreeMap::new();
    for (i, step) in steps.iter().enumerate() {
        let stdout = ok(dir, step);
        let name: Vec<&str> = step.split_whitespace().take(2).collect();
        outputs.insert(format!("{i:02} {}", name.join(" ")), stdout.into_bytes());
    }
    collect(dir, dir, &mut outputs);
    outputs
}

fn collect(root: &Path, dir: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(root, &p, into);
            continue;
        }
        let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&p).unwrap();
        if p.file_name().is_some_and(|n| n == "manifest.json") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("duration_ms");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        into.insert(name, bytes);
    }
}
