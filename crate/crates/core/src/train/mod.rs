//! Training loop, run state and checkpoints.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    LrSchedule, RunConfig, CONFIG_VERSION, DEFAULT_EPOCHS_ANNEAL, DEFAULT_EPOCHS_GIBBS,
    LR_MILESTONES,
};

use crate::evaluation::{ais_logz, evaluate_split, metrics_csv, EpochRecord, EvalError};
use crate::latent::{LatentError, NegativePhase};
use crate::model::{Dvae, LogPartition, ModelError};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::{Adam, AdamState, Gradients, Graph, NnError, ParamStore, Tensor};
use crate::rbm::{RbmError, Sampler, SamplerKind};
use crate::rng::stream;
use crate::smiles::{load_corpus_dir, tokenize, SmilesError, Vocabulary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST_CHECKPOINT: &str = "checkpoint.ckpt";
const STATE_KIND: &str = "dvae-train-state";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("epoch {epoch} outside a run of {epochs} epochs")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("corpus missing: {0}")]
    CorpusMissing(String),
    #[error("corpus: {0}")]
    Corpus(#[from] SmilesError),
    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl From<CheckpointError> for TrainError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(m) => TrainError::Io(m.to_string()),
            other => TrainError::CheckpointCorrupt(other.to_string()),
        }
    }
}

/// Framed token ids for each SMILES string; unknown tokens map to UNK.
pub fn encode_all(vocab: &Vocabulary, smiles: &[String]) -> Result<Vec<Vec<usize>>, TrainError> {
    smiles
        .iter()
        .map(|s| {
            Ok(vocab
                .encode(&tokenize(s)?)
                .into_iter()
                .map(|i| i as usize)
                .collect())
        })
        .collect()
}

/// Mean loss pieces over the sequences of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub recon: f64,
    /// KL without `log Z`, unweighted.
    pub kl_no_logz: f64,
}

/// A model, its optimizer and sampler state, and the data it trains on.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub vocab: Vocabulary,
    pub train: Vec<Vec<usize>>,
    pub valid: Vec<Vec<usize>>,
    pub model: Dvae,
    pub store: ParamStore,
    pub adam: AdamState,
    pub sampler: Sampler,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub records: Vec<EpochRecord>,
}

fn fresh_sampler(cfg: &RunConfig) -> Result<Sampler, TrainError> {
    Ok(match cfg.sampler {
        SamplerKind::GibbsPcd => {
            Sampler::gibbs_pcd(cfg.model.n_latent(), cfg.chains, cfg.pcd_k, cfg.seed)
        }
        SamplerKind::SimAnneal => Sampler::sim_anneal(cfg.anneal, cfg.seed)?,
        SamplerKind::ExactEnum => Sampler::exact(cfg.seed),
    })
}

impl Trainer {
    /// Fresh run on in-memory data.
    pub fn from_data(
        cfg: RunConfig,
        vocab: Vocabulary,
        train: &[String],
        valid: &[String],
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::CorpusMissing("no training molecules".into()));
        }
        let (model, store) = Dvae::new(&cfg.model, vocab.len(), cfg.seed)?;
        Ok(Self {
            train: encode_all(&vocab, train)?,
            valid: encode_all(&vocab, valid)?,
            adam: AdamState::new(&store),
            sampler: fresh_sampler(&cfg)?,
            vocab,
            model,
            store,
            cfg,
            epoch: 0,
            step: 0,
            records: Vec::new(),
        })
    }

    /// Fresh run on the prepared corpus named by the config.
    pub fn new(cfg: RunConfig) -> Result<Self, TrainError> {
        if !cfg.corpus.is_dir() {
            return Err(TrainError::CorpusMissing(cfg.corpus.display().to_string()));
        }
        let c = load_corpus_dir(&cfg.corpus)?;
        Self::from_data(cfg, c.vocab, &c.train, &c.valid)
    }

    /// Continue a run from a checkpoint written by [`Trainer::checkpoint`].
    /// The config may extend `epochs`; the model shape must match.
    pub fn resume(cfg: RunConfig, ckpt: &Checkpoint) -> Result<Self, TrainError> {
        let mut t = Self::new(cfg)?;
        t.restore(ckpt)?;
        Ok(t)
    }

    pub fn lr(&self) -> Result<f64, TrainError> {
        self.cfg.lr_at(self.epoch)
    }

    /// One optimizer step over the given training sequence indices.
    pub fn train_step(&mut self, batch: &[usize]) -> Result<StepStats, TrainError> {
        let lr = self.lr()?;
        let rbm = self.model.rbm.read(&self.store);
        let samples = self.sampler.draw(&rbm, self.cfg.neg_samples)?;
        let neg = NegativePhase::from_samples(&rbm, &samples)?;
        let n_latent = self.model.cfg.n_latent();
        let inv_b = 1.0 / batch.len() as f64;
        let mut total = Gradients::new(&self.store);
        let (mut recon, mut kl) = (0.0, 0.0);
        let width = rayon::current_num_threads().max(1);
        for (c, chunk) in batch.chunks(width).enumerate() {
            let results = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &idx)| {
                    let i = (c * width + j) as u64;
                    let mut rng = stream(self.cfg.seed, "zeta", self.step, i);
                    let rho: Vec<f64> = (0..n_latent).map(|_| rng.random()).collect();
                    let mut g = if self.model.cfg.dropout > 0.0 {
                        Graph::with_dropout(
                            &self.store,
                            self.model.cfg.dropout,
                            stream(self.cfg.seed, "dropout", self.step, i),
                        )
                    } else {
                        Graph::new(&self.store)
                    };
                    let lz = LogPartition {
                        value: 0.0,
                        phase: &neg,
                    };
                    let l = self.model.sequence_loss(
                        &mut g,
                        &self.train[idx],
                        &rho,
                        self.cfg.beta,
                        Some(lz),
                    )?;
                    Ok((g.backward_scaled(l.loss, inv_b), l.recon, l.kl))
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            for (grads, r, k) in results {
                total.merge(&grads);
                recon += r;
                kl += k;
            }
        }
        Adam::default().step(&mut self.store, &total, &mut self.adam, lr)?;
        self.step += 1;
        Ok(StepStats {
            recon: recon * inv_b,
            kl_no_logz: kl * inv_b,
        })
    }

    /// Training order for a 0-based epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut stream(self.cfg.seed, "shuffle", epoch as u64, 0));
        order
    }

    /// Train one epoch, then record train and valid rows. The train row holds
    /// running step averages; both rows use the epoch-end AIS `log Z`.
    pub fn run_epoch(&mut self) -> Result<(), TrainError> {
        let start = Instant::now();
        let lr = self.lr()?;
        let order = self.epoch_order(self.epoch);
        let (mut recon, mut kl, mut n) = (0.0, 0.0, 0usize);
        for batch in order.chunks(self.cfg.batch_size) {
            let s = self.train_step(batch)?;
            recon += s.recon * batch.len() as f64;
            kl += s.kl_no_logz * batch.len() as f64;
            n += batch.len();
        }
        let epoch = self.epoch + 1;
        let rbm = self.model.rbm.read(&self.store);
        let log_z = ais_logz(&rbm, &self.cfg.ais, self.cfg.seed ^ epoch as u64).log_z;
        let beta = self.cfg.beta;
        let train_recon = recon / n as f64;
        let train_kl = beta * (kl / n as f64 + log_z);
        let mut rows = vec![EpochRecord {
            epoch,
            split: "train".into(),
            total: train_recon + train_kl,
            recon: train_recon,
            kl: train_kl,
            logz: log_z,
            lr,
            seconds: 0.0,
        }];
        if !self.valid.is_empty() {
            let v = evaluate_split(
                &self.model,
                &self.store,
                &self.valid,
                beta,
                log_z,
                self.cfg.seed,
            )?;
            rows.push(EpochRecord {
                split: "valid".into(),
                total: v.total,
                recon: v.recon,
                kl: v.kl,
                ..rows[0].clone()
            });
        }
        let seconds = if self.cfg.log_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        for r in &mut rows {
            r.seconds = seconds;
            log::info!("{}", r.csv_row());
        }
        self.records.extend(rows);
        self.epoch = epoch;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", STATE_KIND);
        for (k, v) in self.cfg.to_pairs() {
            ck.set_meta(&format!("cfg.{k}"), v);
        }
        ck.set_meta("vocab", self.vocab.tokens().join(" "));
        ck.set_meta("epoch", self.epoch);
        ck.set_meta("step", self.step);
        ck.set_meta("adam_t", self.adam.t);
        ck.set_meta("sampler", self.sampler.kind.name());
        ck.set_meta("sampler_seed", self.sampler.seed);
        ck.set_meta("sampler_round", self.sampler.round);
        ck.set_meta("records", self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            ck.set_meta(&format!("record.{i}"), r.csv_row());
        }
        for (name, t) in self.store.iter() {
            ck.push(&format!("param.{name}"), t.clone());
        }
        for (id, (m, v)) in self.store.ids().zip(self.adam.m.iter().zip(&self.adam.v)) {
            let name = self.store.name(id);
            ck.push(&format!("adam.m.{name}"), m.clone());
            ck.push(&format!("adam.v.{name}"), v.clone());
        }
        if !self.sampler.chains.is_empty() {
            let units = self.sampler.chains[0].len();
            let data = self
                .sampler
                .chains
                .iter()
                .flatten()
                .map(|&b| b as f64)
                .collect();
            ck.push(
                "sampler.chains",
                Tensor::matrix(self.sampler.chains.len(), units, data),
            );
        }
        ck
    }

    fn restore(&mut self, ck: &Checkpoint) -> Result<(), TrainError> {
        if ck.meta("kind")? != STATE_KIND {
            return Err(TrainError::CheckpointCorrupt(
                "not a training checkpoint".into(),
            ));
        }
        let saved = model_config_of(ck)?;
        if saved != self.cfg.model {
            return Err(TrainError::Config(
                "model settings differ from the checkpoint".into(),
            ));
        }
        if vocab_of(ck)? != self.vocab {
            return Err(TrainError::Config(
                "corpus vocabulary differs from the checkpoint".into(),
            ));
        }
        load_params(ck, &mut self.store)?;
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            let name = self.store.name(id).to_string();
            let shape = self.store.get(id).shape().to_vec();
            for (prefix, slot) in [
                ("adam.m", &mut self.adam.m[id.0]),
                ("adam.v", &mut self.adam.v[id.0]),
            ] {
                let t = ck.tensor(&format!("{prefix}.{name}"))?;
                if t.shape() != shape.as_slice() {
                    return Err(TrainError::CheckpointCorrupt(format!(
                        "{prefix}.{name} has the wrong shape"
                    )));
                }
                *slot = t.clone();
            }
        }
        self.adam.t = ck.meta_parse("adam_t")?;
        self.epoch = ck.meta_parse("epoch")?;
        self.step = ck.meta_parse("step")?;
        let kind = SamplerKind::parse(ck.meta("sampler")?)
            .ok_or_else(|| TrainError::CheckpointCorrupt("unknown sampler".into()))?;
        if kind != self.sampler.kind {
            return Err(TrainError::Config(
                "sampler differs from the checkpoint".into(),
            ));
        }
        self.sampler.seed = ck.meta_parse("sampler_seed")?;
        self.sampler.round = ck.meta_parse("sampler_round")?;
        if kind == SamplerKind::GibbsPcd {
            let t = ck.tensor("sampler.chains")?;
            if t.cols() != self.model.cfg.n_latent() {
                return Err(TrainError::CheckpointCorrupt(
                    "chain width disagrees with the model".into(),
                ));
            }
            self.sampler.chains = (0..t.rows())
                .map(|r| t.row_slice(r).iter().map(|&x| x as u8).collect())
                .collect();
        }
        let n: usize = ck.meta_parse("records")?;
        self.records = (0..n)
            .map(|i| {
                EpochRecord::parse_row(ck.meta(&format!("record.{i}"))?).map_err(TrainError::from)
            })
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    /// Write the metrics log and checkpoints for the current epoch.
    pub fn save_outputs(&self) -> Result<(), TrainError> {
        let dir = &self.cfg.out_dir;
        fs::create_dir_all(dir).map_err(|e| TrainError::Io(format!("{}: {e}", dir.display())))?;
        fs::write(dir.join(METRICS_FILE), metrics_csv(&self.records))
            .map_err(|e| TrainError::Io(e.to_string()))?;
        let ck = self.checkpoint();
        ck.save(&dir.join(LATEST_CHECKPOINT))?;
        if self.epoch % self.cfg.checkpoint_every == 0 || self.epoch == self.cfg.epochs {
            ck.save(&epoch_checkpoint_path(dir, self.epoch))?;
        }
        Ok(())
    }

    /// Train until `cfg.epochs`, writing outputs after every epoch.
    pub fn run(&mut self) -> Result<(), TrainError> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
            self.save_outputs()?;
        }
        Ok(())
    }
}

pub fn epoch_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.ckpt"))
}

fn vocab_of(ck: &Checkpoint) -> Result<Vocabulary, TrainError> {
    let text: String = ck
        .meta("vocab")?
        .split(' ')
        .map(|t| format!("{t}\n"))
        .collect();
    Vocabulary::from_text(&text).map_err(|e| TrainError::CheckpointCorrupt(e.to_string()))
}

/// Run settings stored in a checkpoint.
pub fn run_config_of(ck: &Checkpoint) -> Result<RunConfig, TrainError> {
    let mut cfg = RunConfig::default();
    for (k, v) in &ck.meta {
        if let Some(key) = k.strip_prefix("cfg.") {
            cfg.set(key, v)
                .map_err(|e| TrainError::CheckpointCorrupt(e.to_string()))?;
        }
    }
    Ok(cfg)
}

fn model_config_of(ck: &Checkpoint) -> Result<crate::model::ModelConfig, TrainError> {
    Ok(run_config_of(ck)?.model)
}

fn load_params(ck: &Checkpoint, store: &mut ParamStore) -> Result<(), TrainError> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = format!("param.{}", store.name(id));
        let t = ck.tensor(&name)?;
        if t.shape() != store.get(id).shape() {
            return Err(TrainError::CheckpointCorrupt(format!(
                "{name} has the wrong shape"
            )));
        }
        *store.get_mut(id) = t.clone();
    }
    Ok(())
}

/// A trained model restored from a checkpoint, without optimizer state.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: Dvae,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub run: RunConfig,
    pub chains: Vec<Vec<u8>>,
}

pub fn load_model(ck: &Checkpoint) -> Result<LoadedModel, TrainError> {
    if ck.meta("kind")? != STATE_KIND {
        return Err(TrainError::CheckpointCorrupt(
            "not a training checkpoint".into(),
        ));
    }
    let run = run_config_of(ck)?;
    let vocab = vocab_of(ck)?;
    let (model, mut store) = Dvae::new(&run.model, vocab.len(), run.seed)?;
    load_params(ck, &mut store)?;
    let chains = match ck.tensor("sampler.chains") {
        Ok(t) => (0..t.rows())
            .map(|r| t.row_slice(r).iter().map(|&x| x as u8).collect())
            .collect(),
        Err(_) => Vec::new(),
    };
    Ok(LoadedModel {
        model,
        store,
        vocab,
        run,
        chains,
    })
}
