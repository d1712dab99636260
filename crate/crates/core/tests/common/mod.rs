#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dvae::model::ModelConfig;
use dvae::rbm::SamplerKind;
use dvae::smiles::prepare_dataset;
use dvae::train::{LrSchedule, RunConfig};

pub const TINY_SMILES: [&str; 12] = [
    "CCO", "CCN", "c1ccccc1", "CC(=O)O", "CCCl", "OCCO", "CC(C)N", "C1CCCCC1", "CCOC", "NCC(=O)O",
    "c1ccncc1", "CC#N",
];

/// Writes a prepared corpus of [`TINY_SMILES`] under `dir/corpus`.
pub fn tiny_corpus(dir: &Path) -> PathBuf {
    let c = prepare_dataset(&TINY_SMILES, 200, 3).unwrap();
    let out = dir.join("corpus");
    c.write_dir(&out).unwrap();
    out
}

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        max_len: 16,
        ..ModelConfig::tiny()
    }
}

pub fn tiny_run(dir: &Path, sampler: SamplerKind) -> RunConfig {
    let mut cfg = RunConfig {
        corpus: tiny_corpus(dir),
        out_dir: dir.join("run"),
        seed: 5,
        epochs: 2,
        batch_size: 4,
        lr0: 1e-3,
        schedule: LrSchedule::Constant,
        sampler,
        neg_samples: 8,
        chains: 8,
        pcd_k: 3,
        log_wall_time: false,
        model: tiny_model(),
        ..RunConfig::default()
    };
    cfg.anneal.sweeps = 20;
    cfg.ais.n_samples = 50;
    cfg
}
