#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ucosda_core::io::{write_gray_png, write_rgb_png};
use ucosda_core::toy::{two_squares_on_noise, write_square_dataset};

pub const STANDIN: &str = "patch_stats_8";

pub fn ucosda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucosda"))
        .args(args)
        .arg("--log-level=warn")
        .output()
        .expect("binary runs")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = ucosda(args);
    assert!(
        out.status.success(),
        "ucosda {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    ucosda(args).status.code().expect("exit code")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two toy sources of square-on-noise images under `<root>/cod` and `<root>/sod`.
pub fn toy_sources(root: &Path, n: usize, size: usize) -> (PathBuf, PathBuf) {
    let (cod, sod) = (root.join("cod"), root.join("sod"));
    write_square_dataset(&cod, n, size, 1).unwrap();
    write_square_dataset(&sod, n, size, 2).unwrap();
    (cod, sod)
}

pub fn two_object_source(root: &Path, n: usize, size: usize) -> PathBuf {
    for k in 0..n {
        let (rgb, gt) = two_squares_on_noise(size, k as u64);
        write_rgb_png(&root.join("images").join(format!("two_{k}.png")), &rgb).unwrap();
        write_gray_png(&root.join("gt").join(format!("two_{k}.png")), &gt).unwrap();
    }
    root.to_path_buf()
}

pub fn write_config(path: &Path, size: usize, epochs: usize, batch: usize) {
    std::fs::write(path, format!("epochs={epochs}\nimage_size={size}x{size}\nbatch_size={batch}\n")).unwrap();
}

/// File name → bytes for every regular file below `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Every artifact of one split → pseudo-label → train → predict run.
pub struct PipelineRun {
    pub manifest: Vec<u8>,
    pub labels: BTreeMap<String, Vec<u8>>,
    pub loss_csv: Vec<u8>,
    pub checkpoint: Vec<u8>,
    pub predictions: BTreeMap<String, Vec<u8>>,
}

/// Full toy pipeline through the binary, with all outputs under `work`.
pub fn run_pipeline(cod: &Path, sod: &Path, work: &Path, size: usize, epochs: usize, seed: u64) -> PipelineRun {
    std::fs::create_dir_all(work).unwrap();
    let (split, config, pl, out, pred) = (
        work.join("split.tsv"),
        work.join("train.cfg"),
        work.join("pl"),
        work.join("run"),
        work.join("pred"),
    );
    write_config(&config, size, epochs, 2);
    let seed = seed.to_string();
    ok(&["split", "--cod", s(cod), "--sod", s(sod), "--per-source", "3", "--seed", &seed, "--out", s(&split)]);
    ok(&["pseudo-label", "--split", s(&split), "--config", s(&config), "--pl-cache", s(&pl), "--arch", STANDIN]);
    ok(&[
        "train", "--config", s(&config), "--split", s(&split), "--out", s(&out), "--pl-cache", s(&pl), "--arch", STANDIN,
        "--seed", &seed,
    ]);
    ok(&[
        "predict", "--checkpoint", s(&out.join("checkpoint.json")), "--images", s(&cod.join("images")), "--out", s(&pred),
        "--arch", STANDIN,
    ]);
    PipelineRun {
        manifest: std::fs::read(&split).unwrap(),
        labels: snapshot(&pl),
        loss_csv: std::fs::read(out.join("loss.csv")).unwrap(),
        checkpoint: std::fs::read(out.join("checkpoint.json")).unwrap(),
        predictions: snapshot(&pred),
    }
}
