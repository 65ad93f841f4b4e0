#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairfed::config::DataSource;
use fairfed::{default_benchmark, ExperimentConfig};

/// A benchmark shrunk to run in well under a second.
pub fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = default_benchmark();
    if let DataSource::Synthetic(spec) = &mut cfg.data {
        spec.feature_dim = 6;
        for site in &mut spec.sites {
            site.n_samples = 80;
        }
    }
    cfg.backbone.m = 4;
    cfg.adapter.rank = 2;
    cfg.federation.rounds = 3;
    cfg.federation.batch_size = 16;
    cfg.seeds = vec![1, 2];
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json_pretty()).unwrap();
    path
}

pub fn fairfed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairfed"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
