#![allow(dead_code)]

use std::fs;
use std::path::Path;

use hienet::config::TrainConfig;
use hienet::dataset::Dataset;
use hienet::synth::{generate_synthetic, SyntheticSpec};

pub fn small_dataset(cascades: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        num_users: 300,
        num_cascades: cascades,
        max_size: 60,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

/// Desk preset shrunk further so a few epochs take milliseconds.
pub fn tiny_config(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.epochs = epochs;
    c.walk.count = 4;
    c.walk.length = 4;
    c.social.max_pairs = 4;
    c.snapshot.m_max = 4;
    c.snapshot.time_bins = 16;
    c.snapshot.pe_dim = 4;
    c.model.d_model = 8;
    c.model.embed_dim = 4;
    c.model.lstm_hidden = 4;
    c.model.gcn_hidden = 4;
    c.model.ff_dim = 8;
    c.model.mlp_sizes = vec![8];
    c
}

pub fn write_config(path: &Path, config: &TrainConfig) {
    fs::write(path, serde_json::to_string_pretty(config).unwrap()).unwrap();
}

pub fn assert_same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let (x, y) = (fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
}
