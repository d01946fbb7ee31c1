#![allow(dead_code)]

use std::path::Path;

use nri_core::config::TrainConfig;
use nri_core::sim::{Family, SplitCounts, SystemSpec};
use nrimpm::config::{EvalConfig, RunConfig};
use nrimpm::simulate::simulate_to_dir;

pub fn tiny_spec(seed: u64) -> SystemSpec {
    SystemSpec {
        t: 12,
        ..SystemSpec::new(Family::Springs, 3, seed)
    }
}

pub const TINY_COUNTS: SplitCounts = SplitCounts {
    train: 24,
    val: 8,
    test: 8,
};

pub fn make_data(dir: &Path, seed: u64) {
    simulate_to_dir(&tiny_spec(seed), TINY_COUNTS, dir, 1).unwrap();
}

pub fn tiny_config(data: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(data.to_path_buf());
    cfg.model.hidden = 8;
    cfg.train = TrainConfig {
        epochs: 2,
        batch_size: 8,
        lr: 1e-3,
        segment: 4,
        sigma2: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    };
    cfg.eval = EvalConfig {
        batch_size: 8,
        horizons: vec![1, 5, 11],
    };
    cfg
}
