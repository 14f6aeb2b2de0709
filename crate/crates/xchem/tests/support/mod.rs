#![allow(dead_code)]

pub mod http;
pub mod rule_oracle;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xchem::synth::{write_corpus, SynthConfig};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xchem"));
    c.env_remove("XCHEM_EMBEDDING_URL").env_remove("XCHEM_CHAT_URL").env_remove("RUST_LOG");
    c
}

/// Runs the binary in `dir` with `args`.
pub fn xchem(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `xchem.toml` and a synthetic corpus of `count` molecules into `dir`.
pub fn project(dir: &Path, count: usize, seed: u64, config: &str) -> PathBuf {
    let cfg = dir.join("xchem.toml");
    fs::write(&cfg, config).unwrap();
    write_corpus(&dir.join("data/xyz"), &dir.join("data/metadata.jsonl"), &SynthConfig { count, seed, missing_rate: 0.0 }).unwrap();
    cfg
}

/// A small model that trains in well under a second.
pub const TINY: &str = "seed = 7
targets = [\"homo\"]

[encoder]
blocks = 1
hidden = 8
n_radial = 8

[fusion]
latent = 8

[train]
epochs = 2
batch_size = 8
";
