//! Run configuration: a flat `key = value` file whose first key is
//! `format_version`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::TrainError;
use crate::evaluation::AisConfig;
use crate::model::ModelConfig;
use crate::rbm::{AnnealSchedule, SamplerKind, DEFAULT_CHAINS, DEFAULT_PCD_K};

pub const CONFIG_VERSION: u32 = 1;
/// Fractions of the run after which the learning rate halves.
pub const LR_MILESTONES: [f64; 3] = [0.5, 0.75, 0.95];
pub const LR_FACTOR: f64 = 0.5;
pub const DEFAULT_EPOCHS_GIBBS: usize = 300;
pub const DEFAULT_EPOCHS_ANNEAL: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    MultiStep,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub schedule: LrSchedule,
    /// Weight of the KL term.
    pub beta: f64,
    pub sampler: SamplerKind,
    /// Negative-phase samples per step.
    pub neg_samples: usize,
    pub chains: usize,
    pub pcd_k: usize,
    pub anneal: AnnealSchedule,
    pub ais: AisConfig,
    pub checkpoint_every: usize,
    /// Record wall-clock seconds in the metrics log; off gives
    /// byte-reproducible logs.
    pub log_wall_time: bool,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            out_dir: PathBuf::from("run"),
            seed: 0,
            epochs: DEFAULT_EPOCHS_GIBBS,
            batch_size: 32,
            lr0: 6e-5,
            schedule: LrSchedule::MultiStep,
            beta: 0.1,
            sampler: SamplerKind::GibbsPcd,
            neg_samples: DEFAULT_CHAINS,
            chains: DEFAULT_CHAINS,
            pcd_k: DEFAULT_PCD_K,
            anneal: AnnealSchedule::default(),
            ais: AisConfig::default(),
            checkpoint_every: 1,
            log_wall_time: true,
            model: ModelConfig::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, TrainError> {
    v.parse()
        .map_err(|_| TrainError::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> Result<f64, TrainError> {
        if epoch >= self.epochs {
            return Err(TrainError::EpochOutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        Ok(match self.schedule {
            LrSchedule::Constant => self.lr0,
            LrSchedule::MultiStep => {
                let passed = LR_MILESTONES
                    .iter()
                    .filter(|f| epoch >= (*f * self.epochs as f64).ceil() as usize)
                    .count();
                self.lr0 * LR_FACTOR.powi(passed as i32)
            }
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), TrainError> {
        match key {
            "corpus" => self.corpus = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "lr0" => self.lr0 = num(key, v)?,
            "schedule" => {
                self.schedule = match v {
                    "multistep" => LrSchedule::MultiStep,
                    "constant" => LrSchedule::Constant,
                    _ => return Err(TrainError::Config(format!("schedule: unknown {v:?}"))),
                }
            }
            "beta" => self.beta = num(key, v)?,
            "sampler" => {
                self.sampler = SamplerKind::parse(v)
                    .ok_or_else(|| TrainError::Config(format!("sampler: unknown {v:?}")))?
            }
            "neg_samples" => self.neg_samples = num(key, v)?,
            "chains" => self.chains = num(key, v)?,
            "pcd_k" => self.pcd_k = num(key, v)?,
            "anneal_sweeps" => self.anneal.sweeps = num(key, v)?,
            "anneal_beta_start" => self.anneal.beta_start = num(key, v)?,
            "beta_eff" => self.anneal.beta_eff = num(key, v)?,
            "ais_intermediate" => self.ais.n_intermediate = num(key, v)?,
            "ais_samples" => self.ais.n_samples = num(key, v)?,
            "ais_sweeps" => self.ais.gibbs_sweeps_per_level = num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "log_wall_time" => self.log_wall_time = num(key, v)?,
            _ => {
                if !self.model.set(key, v).map_err(TrainError::Config)? {
                    return Err(TrainError::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("epochs, batch_size and checkpoint_every must be positive");
        }
        if !(self.lr0 > 0.0) || !(self.beta >= 0.0) {
            return bad("lr0 must be positive and beta non-negative");
        }
        if self.neg_samples == 0 {
            return bad("neg_samples must be positive");
        }
        if self.ais.n_intermediate == 0 || self.ais.n_samples < 2 {
            return bad("ais_intermediate must be at least 1 and ais_samples at least 2");
        }
        if self.sampler == SamplerKind::GibbsPcd && self.chains == 0 {
            return bad("chains must be positive");
        }
        self.anneal
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    /// Parse config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        let mut saw_version = false;
        let mut saw_epochs = false;
        let mut saw_schedule = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    TrainError::Config(format!("line {}: expected key = value", n + 1))
                })?;
            if !saw_version {
                if k != "format_version" {
                    return Err(TrainError::Config(
                        "first key must be format_version".into(),
                    ));
                }
                if v != CONFIG_VERSION.to_string() {
                    return Err(TrainError::Config(format!(
                        "unsupported format_version {v}"
                    )));
                }
                saw_version = true;
                continue;
            }
            saw_epochs |= k == "epochs";
            saw_schedule |= k == "schedule";
            cfg.set(k, v)?;
        }
        if cfg.sampler == SamplerKind::SimAnneal {
            if !saw_epochs {
                cfg.epochs = DEFAULT_EPOCHS_ANNEAL;
            }
            if !saw_schedule {
                cfg.schedule = LrSchedule::Constant;
            }
        }
        if !saw_version {
            return Err(TrainError::Config("missing format_version".into()));
        }
        for p in [&mut cfg.corpus, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Every field as `(key, value)`, model fields included.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("corpus".into(), self.corpus.display().to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("lr0".into(), self.lr0.to_string()),
            (
                "schedule".into(),
                match self.schedule {
                    LrSchedule::MultiStep => "multistep".into(),
                    LrSchedule::Constant => "constant".into(),
                },
            ),
            ("beta".into(), self.beta.to_string()),
            ("sampler".into(), self.sampler.name().into()),
            ("neg_samples".into(), self.neg_samples.to_string()),
            ("chains".into(), self.chains.to_string()),
            ("pcd_k".into(), self.pcd_k.to_string()),
            ("anneal_sweeps".into(), self.anneal.sweeps.to_string()),
            (
                "anneal_beta_start".into(),
                self.anneal.beta_start.to_string(),
            ),
            ("beta_eff".into(), self.anneal.beta_eff.to_string()),
            (
                "ais_intermediate".into(),
                self.ais.n_intermediate.to_string(),
            ),
            ("ais_samples".into(), self.ais.n_samples.to_string()),
            (
                "ais_sweeps".into(),
                self.ais.gibbs_sweeps_per_level.to_string(),
            ),
            ("checkpoint_every".into(), self.checkpoint_every.to_string()),
            ("log_wall_time".into(), self.log_wall_time.to_string()),
        ];
        v.extend(
            self.model
                .to_pairs()
                .into_iter()
                .map(|(k, x)| (k.to_string(), x)),
        );
        v
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("format_version = {CONFIG_VERSION}\n");
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
