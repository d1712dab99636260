//! Annealed importance sampling for `log Z` and per-epoch loss records.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Dvae, ModelError};
use crate::nn::{Graph, ParamStore};
use crate::rbm::Rbm;
use crate::rng::stream;

pub const METRICS_HEADER: &str = "epoch,split,total,recon,kl,logz,lr,seconds";
pub const CSV_VERSION_LINE: &str = "# format_version=1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no sequences to evaluate")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad metrics log: {0}")]
    BadLog(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisConfig {
    pub n_intermediate: usize,
    pub n_samples: usize,
    pub gibbs_sweeps_per_level: usize,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            n_intermediate: 10,
            n_samples: 500,
            gibbs_sweeps_per_level: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisEstimate {
    pub log_z: f64,
    pub stderr: f64,
}

/// `log(mean(exp(x)))` with max subtraction.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + (xs.iter().map(|x| (x - max).exp()).sum::<f64>() / xs.len() as f64).ln()
}

/// AIS from the uniform distribution (`log Z₀ = N ln 2`) through
/// `β_k = k/(K+1)`, with the hidden layer summed out analytically.
pub fn ais_logz(rbm: &Rbm, cfg: &AisConfig, seed: u64) -> AisEstimate {
    let levels = cfg.n_intermediate + 1;
    let log_z0 = rbm.units() as f64 * std::f64::consts::LN_2;
    let log_w: Vec<f64> = (0..cfg.n_samples.max(1))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "ais", 0, c as u64);
            let mut z: Vec<u8> = (0..rbm.units()).map(|_| rng.random_range(0..2u8)).collect();
            let mut w = 0.0;
            let mut prev = rbm.log_marginal_v(&z[..rbm.nv], 0.0);
            for k in 1..=levels {
                let beta = k as f64 / levels as f64;
                let cur = rbm.log_marginal_v(&z[..rbm.nv], beta);
                w += cur - prev;
                if k < levels {
                    for _ in 0..cfg.gibbs_sweeps_per_level {
                        rbm.gibbs_sweep_at(&mut z, beta, &mut rng);
                    }
                    prev = rbm.log_marginal_v(&z[..rbm.nv], beta);
                }
            }
            w
        })
        .collect();
    let n = log_w.len() as f64;
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = if log_w.len() > 1 {
        scaled.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    AisEstimate {
        log_z: log_z0 + max + mean.ln(),
        stderr: (var / n).sqrt() / mean,
    }
}

/// Mean per-sequence loss pieces over a split. `kl` is `β·KL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Evaluation-mode ELBO pieces with one fixed ζ draw per sequence and the
/// supplied `log Z`.
pub fn evaluate_split(
    model: &Dvae,
    store: &ParamStore,
    seqs: &[Vec<usize>],
    beta: f64,
    log_z: f64,
    seed: u64,
) -> Result<SplitLoss, EvalError> {
    if seqs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n_latent = model.cfg.n_latent();
    let parts: Vec<(f64, f64)> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, ids)| {
            let mut rng = stream(seed, "eval-zeta", 0, i as u64);
            let rho: Vec<f64> = (0..n_latent).map(|_| rng.random()).collect();
            let mut g = Graph::new(store);
            let l = model.sequence_loss(&mut g, ids, &rho, beta, None)?;
            Ok((l.recon, l.kl))
        })
        .collect::<Result<_, ModelError>>()?;
    let n = parts.len() as f64;
    let recon = parts.iter().map(|p| p.0).sum::<f64>() / n;
    let kl_no_z = parts.iter().map(|p| p.1).sum::<f64>() / n;
    let kl = beta * (kl_no_z + log_z);
    Ok(SplitLoss {
        total: recon + kl,
        recon,
        kl,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub total: f64,
    pub recon: f64,
    /// `β·KL`, so that `total = recon + kl`.
    pub kl: f64,
    pub logz: f64,
    pub lr: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            self.total,
            self.recon,
            self.kl,
            self.logz,
            self.lr,
            self.seconds
        )
    }

    pub fn parse_row(line: &str) -> Result<Self, EvalError> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || EvalError::BadLog(format!("row {line:?}"));
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            split: f[1].to_string(),
            total: num(f[2])?,
            recon: num(f[3])?,
            kl: num(f[4])?,
            logz: num(f[5])?,
            lr: num(f[6])?,
            seconds: num(f[7])?,
        })
    }
}

/// Evaluate one split at the end of an epoch, estimating `log Z` by AIS.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_epoch(
    model: &Dvae,
    store: &ParamStore,
    seqs: &[Vec<usize>],
    ais: &AisConfig,
    beta: f64,
    seed: u64,
    epoch: usize,
    lr: f64,
) -> Result<EpochRecord, EvalError> {
    if seqs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let rbm = model.rbm.read(store);
    let log_z = ais_logz(&rbm, ais, seed).log_z;
    let l = evaluate_split(model, store, seqs, beta, log_z, seed)?;
    Ok(EpochRecord {
        epoch,
        split: "valid".into(),
        total: l.total,
        recon: l.recon,
        kl: l.kl,
        logz: log_z,
        lr,
        seconds: 0.0,
    })
}

pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut s = format!("{CSV_VERSION_LINE}\n{METRICS_HEADER}\n");
    for r in records {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochRecord>, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_VERSION_LINE) || lines.next() != Some(METRICS_HEADER) {
        return Err(EvalError::BadLog("missing version or header line".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(EpochRecord::parse_row)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ais_on_uniform_model_is_exact() {
        let rbm = Rbm::zeros(5, 3);
        let e = ais_logz(&rbm, &AisConfig::default(), 1);
        assert_eq!(e.log_z, 8.0 * std::f64::consts::LN_2);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn log_mean_exp_survives_large_spread() {
        let x = [-700.0, 0.0, 700.0];
        let v = log_mean_exp(&x);
        assert!((v - (700.0 - 3f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn metrics_round_trip() {
        let r = EpochRecord {
            epoch: 2,
            split: "valid".into(),
            total: 3.5,
            recon: 3.0,
            kl: 0.5,
            logz: 177.1,
            lr: 6e-5,
            seconds: 1.25,
        };
        let text = metrics_csv(&[r.clone()]);
        assert!(
            text.starts_with("# format_version=1\nepoch,split,total,recon,kl,logz,lr,seconds\n")
        );
        assert_eq!(parse_metrics_csv(&text).unwrap(), vec![r]);
    }
}
