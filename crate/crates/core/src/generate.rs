//! Sampling molecules from the prior and scoring them: validity, molecular
//! weight and nearest-neighbour Tanimoto similarity to the training set.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::decoder::DecodeMode;
use crate::evaluation::CSV_VERSION_LINE;
use crate::latent::{clamp_q, sample_zeta};
use crate::model::{Dvae, ModelError};
use crate::nn::ParamStore;
use crate::rbm::{RbmError, Sampler};
use crate::rng::stream;
use crate::smiles::{
    check_smiles, fingerprint, molecular_weight, tanimoto, tokenize, Fingerprint, Vocabulary,
};

/// Above this nearest-neighbour similarity a molecule counts as close to the
/// training set.
pub const CLOSE_TANIMOTO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error("sampler returned {got} states, {want} requested")]
    SamplerShort { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMolecule {
    pub smiles: String,
    pub valid: bool,
    pub mw: Option<f64>,
    pub max_tanimoto: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub n_valid: usize,
    /// `n_valid / n`; zero for an empty set.
    pub validity: f64,
    pub mw_mean: Option<f64>,
    /// Fraction of valid molecules with nearest-neighbour similarity above
    /// [`CLOSE_TANIMOTO`].
    pub close_fraction: Option<f64>,
}

pub fn fingerprints_of(smiles: &[String]) -> Vec<Fingerprint> {
    smiles
        .par_iter()
        .filter_map(|s| check_smiles(s).graph.map(|g| fingerprint(&g)))
        .collect()
}

pub fn max_tanimoto(fp: &Fingerprint, reference: &[Fingerprint]) -> Option<f64> {
    reference.iter().map(|r| tanimoto(fp, r)).reduce(f64::max)
}

pub fn score(smiles: &str, reference: &[Fingerprint]) -> ScoredMolecule {
    let check = check_smiles(smiles);
    let (mw, sim) = match (&check.graph, check.valid) {
        (Some(g), true) => (
            molecular_weight(g).ok(),
            max_tanimoto(&fingerprint(g), reference),
        ),
        _ => (None, None),
    };
    ScoredMolecule {
        smiles: smiles.to_string(),
        valid: check.valid,
        mw,
        max_tanimoto: sim,
    }
}

pub fn score_all(smiles: &[String], reference: &[Fingerprint]) -> Vec<ScoredMolecule> {
    smiles.par_iter().map(|s| score(s, reference)).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(mols: &[ScoredMolecule]) -> Summary {
    let n = mols.len();
    let n_valid = mols.iter().filter(|m| m.valid).count();
    let sims: Vec<f64> = mols.iter().filter_map(|m| m.max_tanimoto).collect();
    Summary {
        n,
        n_valid,
        validity: if n == 0 {
            0.0
        } else {
            n_valid as f64 / n as f64
        },
        mw_mean: mean(mols.iter().filter_map(|m| m.mw)),
        close_fraction: mean(
            sims.iter()
                .map(|&s| if s > CLOSE_TANIMOTO { 1.0 } else { 0.0 }),
        ),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(s: &Summary) -> String {
    format!(
        "{CSV_VERSION_LINE}\nmetric,value\nn_molecules,{}\nn_valid,{}\nvalidity,{}\nmw_mean,{}\nclose_fraction,{}\n",
        s.n,
        s.n_valid,
        s.validity,
        opt(s.mw_mean),
        opt(s.close_fraction)
    )
}

pub fn molecules_csv(mols: &[ScoredMolecule]) -> String {
    let mut s = format!("{CSV_VERSION_LINE}\nsmiles,valid,mw,max_tanimoto\n");
    for m in mols {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            m.smiles,
            m.valid as u8,
            opt(m.mw),
            opt(m.max_tanimoto)
        );
    }
    s
}

/// Fixed-width histogram; values at or above `hi` land in the last bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

/// Molecular weight (0–1000 Da, 40 bins) and nearest-neighbour similarity
/// (0–1, 20 bins) histograms over the valid molecules.
pub fn histograms_csv(mols: &[ScoredMolecule]) -> String {
    let mw: Vec<f64> = mols.iter().filter_map(|m| m.mw).collect();
    let sim: Vec<f64> = mols.iter().filter_map(|m| m.max_tanimoto).collect();
    let mut s = format!("{CSV_VERSION_LINE}\nproperty,bin_lo,bin_hi,count\n");
    for (name, rows) in [
        ("mw", histogram(&mw, 0.0, 1000.0, 40)),
        ("max_tanimoto", histogram(&sim, 0.0, 1.0, 20)),
    ] {
        for (lo, hi, c) in rows {
            let _ = writeln!(s, "{name},{lo},{hi},{c}");
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub max_len: usize,
    pub mode: DecodeMode,
}

/// Draw `n` latent states from the prior, decode each and score the results.
pub fn generate_molecules(
    model: &Dvae,
    store: &ParamStore,
    vocab: &Vocabulary,
    sampler: &mut Sampler,
    n: usize,
    seed: u64,
    reference: &[Fingerprint],
    opts: GenerateOptions,
) -> Result<Vec<ScoredMolecule>, GenerateError> {
    let rbm = model.rbm.read(store);
    let states = sampler.draw(&rbm, n)?;
    if states.len() != n {
        return Err(GenerateError::SamplerShort {
            got: states.len(),
            want: n,
        });
    }
    let smiles = states
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let q: Vec<f64> = z.iter().map(|&b| clamp_q(b as f64)).collect();
            let mut rng = stream(seed, "gen-zeta", 0, i as u64);
            let rho: Vec<f64> = (0..q.len()).map(|_| rng.random()).collect();
            let zeta = sample_zeta(&q, &rho, model.cfg.spike_exp()).zeta;
            let mut rng = stream(seed, "gen-decode", 0, i as u64);
            let out = model.decode_zeta(store, &zeta, opts.max_len, opts.mode, &mut rng)?;
            Ok(ids_to_smiles(vocab, &out.ids))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(score_all(&smiles, reference))
}

pub fn ids_to_smiles(vocab: &Vocabulary, ids: &[usize]) -> String {
    let ids: Vec<u32> = ids.iter().map(|&i| i as u32).collect();
    vocab.decode(&ids)
}

/// Encoded ids of a SMILES string, framed with BOS and EOS.
pub fn smiles_to_ids(
    vocab: &Vocabulary,
    smiles: &str,
) -> Result<Vec<usize>, crate::smiles::SmilesError> {
    Ok(vocab
        .encode(&tokenize(smiles)?)
        .into_iter()
        .map(|i| i as usize)
        .collect())
}

/// Result of repeatedly encoding, sampling ζ and decoding one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub runs: usize,
    pub exact: usize,
    /// Similarity of each valid decode to the input.
    pub similarities: Vec<f64>,
}

impl Reconstruction {
    pub fn probability(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.exact as f64 / self.runs as f64
        }
    }
}

pub fn reconstruction(
    model: &Dvae,
    store: &ParamStore,
    vocab: &Vocabulary,
    smiles: &str,
    runs: usize,
    seed: u64,
    opts: GenerateOptions,
) -> Result<Reconstruction, GenerateError> {
    let ids = smiles_to_ids(vocab, smiles).map_err(|_| ModelError::EmptySequence)?;
    let q = model.posterior(store, &ids)?;
    let target = check_smiles(smiles).graph.map(|g| fingerprint(&g));
    let outs = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, "recon-zeta", 0, r as u64);
            let rho: Vec<f64> = (0..q.len()).map(|_| rng.random()).collect();
            let zeta = sample_zeta(&q, &rho, model.cfg.spike_exp()).zeta;
            let mut rng = stream(seed, "recon-decode", 0, r as u64);
            let out = model.decode_zeta(store, &zeta, opts.max_len, opts.mode, &mut rng)?;
            Ok(ids_to_smiles(vocab, &out.ids))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let similarities = match &target {
        Some(t) => outs
            .iter()
            .filter_map(|s| {
                let c = check_smiles(s);
                c.valid
                    .then(|| tanimoto(t, &fingerprint(c.graph.as_ref().unwrap())))
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(Reconstruction {
        runs,
        exact: outs.iter().filter(|s| s.as_str() == smiles).count(),
        similarities,
    })
}
