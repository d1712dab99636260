//! End-to-end training runs on a tiny model: logging, resume, determinism,
//! checkpoint handling and overfitting a single molecule.

mod common;

use std::fs;

use common::tiny_run;
use dvae::decoder::DecodeMode;
use dvae::evaluation::{evaluate_split, parse_metrics_csv};
use dvae::generate::{reconstruction, GenerateOptions};
use dvae::model::ModelConfig;
use dvae::nn::checkpoint::Checkpoint;
use dvae::rbm::SamplerKind;
use dvae::smiles::{tokenize, Vocabulary};
use dvae::train::{
    epoch_checkpoint_path, load_model, LrSchedule, RunConfig, TrainError, Trainer,
    LATEST_CHECKPOINT, METRICS_FILE,
};

fn run_to_end(cfg: RunConfig) -> Trainer {
    let mut t = Trainer::new(cfg).unwrap();
    t.run().unwrap();
    t
}

#[test]
fn one_epoch_writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        epochs: 1,
        ..tiny_run(dir.path(), SamplerKind::GibbsPcd)
    };
    let out = cfg.out_dir.clone();
    let t = run_to_end(cfg);
    let rows = parse_metrics_csv(&fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(
        (rows[0].split.as_str(), rows[1].split.as_str()),
        ("train", "valid")
    );
    for r in &rows {
        assert_eq!(r.epoch, 1);
        assert!(r.total.is_finite() && r.logz.is_finite());
        assert!((r.total - r.recon - r.kl).abs() < 1e-9);
    }
    assert_eq!(rows, t.records);
    assert!(out.join(LATEST_CHECKPOINT).exists());
    assert!(epoch_checkpoint_path(&out, 1).exists());
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let straight = run_to_end(tiny_run(dir.path(), SamplerKind::GibbsPcd));

    let dir2 = tempfile::tempdir().unwrap();
    let first = run_to_end(RunConfig {
        epochs: 1,
        ..tiny_run(dir2.path(), SamplerKind::GibbsPcd)
    });
    let ck = Checkpoint::from_bytes(&first.checkpoint().to_bytes()).unwrap();
    let mut resumed = Trainer::resume(tiny_run(dir2.path(), SamplerKind::GibbsPcd), &ck).unwrap();
    assert_eq!(resumed.epoch, 1);
    resumed.run().unwrap();

    let strip = |t: &Trainer| {
        let mut ck = t.checkpoint();
        ck.meta
            .retain(|(k, _)| k != "cfg.corpus" && k != "cfg.out_dir");
        ck.to_bytes()
    };
    assert_eq!(strip(&straight), strip(&resumed));
    assert_eq!(straight.records, resumed.records);
}

#[test]
fn runs_are_deterministic_for_both_samplers() {
    for kind in [SamplerKind::GibbsPcd, SamplerKind::SimAnneal] {
        let dir = tempfile::tempdir().unwrap();
        let a = run_to_end(tiny_run(dir.path(), kind));
        let b = run_to_end(tiny_run(dir.path(), kind));
        assert_eq!(
            a.checkpoint().to_bytes(),
            b.checkpoint().to_bytes(),
            "{kind:?}"
        );
        let log = fs::read(dir.path().join("run").join(METRICS_FILE)).unwrap();
        assert_eq!(log, dvae::evaluation::metrics_csv(&a.records).into_bytes());
    }
}

#[test]
fn different_seeds_give_different_models() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to_end(RunConfig {
        epochs: 1,
        ..tiny_run(dir.path(), SamplerKind::GibbsPcd)
    });
    let b = run_to_end(RunConfig {
        epochs: 1,
        seed: 6,
        ..tiny_run(dir.path(), SamplerKind::GibbsPcd)
    });
    assert_ne!(a.checkpoint().to_bytes(), b.checkpoint().to_bytes());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let t = run_to_end(RunConfig {
        epochs: 1,
        ..tiny_run(dir.path(), SamplerKind::SimAnneal)
    });
    let bytes = t.checkpoint().to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    let m = load_model(&back).unwrap();
    for id in t.store.ids() {
        let (x, y) = (t.store.get(id).data(), m.store.get(id).data());
        assert!(x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    assert_eq!(m.vocab, t.vocab);
    assert_eq!(m.run.sampler, SamplerKind::SimAnneal);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = run_to_end(RunConfig {
        epochs: 1,
        ..tiny_run(dir.path(), SamplerKind::GibbsPcd)
    });
    let bytes = t.checkpoint().to_bytes();
    let cut = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).map_err(TrainError::from);
    assert!(matches!(cut, Err(TrainError::CheckpointCorrupt(_))));
    let mut junk = bytes.clone();
    junk[0] = b'X';
    assert!(matches!(
        Checkpoint::from_bytes(&junk).map_err(TrainError::from),
        Err(TrainError::CheckpointCorrupt(_))
    ));

    let mut other = t.checkpoint();
    other.meta.retain(|(k, _)| k != "cfg.d_model");
    other.meta.push(("cfg.d_model".into(), "8".into()));
    let cfg = tiny_run(dir.path(), SamplerKind::GibbsPcd);
    assert!(matches!(
        Trainer::resume(cfg.clone(), &other),
        Err(TrainError::Config(_))
    ));

    let mut gutted = t.checkpoint();
    gutted.tensors.retain(|(n, _)| !n.starts_with("adam.v."));
    assert!(matches!(
        Trainer::resume(cfg, &gutted),
        Err(TrainError::CheckpointCorrupt(_))
    ));
}

#[test]
fn missing_corpus_and_epoch_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        corpus: dir.path().join("nowhere"),
        ..tiny_run(dir.path(), SamplerKind::GibbsPcd)
    };
    assert!(matches!(
        Trainer::new(cfg),
        Err(TrainError::CorpusMissing(_))
    ));
    let cfg = tiny_run(dir.path(), SamplerKind::GibbsPcd);
    assert!(matches!(
        cfg.lr_at(cfg.epochs),
        Err(TrainError::EpochOutOfRange { .. })
    ));
}

#[test]
fn overfits_a_single_molecule() {
    let target = "CC(=O)Oc1ccccc1C(=O)O";
    let tokens = tokenize(target).unwrap();
    let vocab = Vocabulary::from_tokens(tokens.iter().map(|t| t.text.as_str()));
    let cfg = RunConfig {
        seed: 3,
        epochs: 1,
        lr0: 1e-2,
        schedule: LrSchedule::Constant,
        neg_samples: 16,
        chains: 16,
        pcd_k: 5,
        log_wall_time: false,
        model: ModelConfig {
            d_emb: 8,
            d_model: 16,
            d_ff: 32,
            heads: 2,
            dropout: 0.0,
            max_len: 32,
            n_visible: 4,
            n_hidden: 4,
            ..ModelConfig::tiny()
        },
        ..RunConfig::default()
    };
    let mut t = Trainer::from_data(cfg, vocab, &[target.to_string()], &[]).unwrap();
    for _ in 0..200 {
        t.train_step(&[0]).unwrap();
    }
    let loss = evaluate_split(&t.model, &t.store, &t.train, 0.0, 0.0, 1).unwrap();
    let per_token = loss.recon / (t.train[0].len() - 1) as f64;
    assert!(per_token < 0.1, "per-token loss {per_token}");
    let opts = GenerateOptions {
        max_len: 40,
        mode: DecodeMode::Multinomial { temperature: 1.0 },
    };
    let r = reconstruction(&t.model, &t.store, &t.vocab, target, 50, 9, opts).unwrap();
    assert!(
        r.probability() >= 0.9,
        "reconstruction probability {}",
        r.probability()
    );
}
