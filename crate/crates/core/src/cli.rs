//! The `dvae` command line. Exit codes: 0 success, 1 usage error, 2 data or
//! runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::decoder::{DecodeMode, DEFAULT_MAX_DECODE};
use crate::evaluation::{ais_logz, evaluate_split, metrics_csv, EpochRecord};
use crate::generate::{
    fingerprints_of, generate_molecules, histograms_csv, molecules_csv, score_all, summarize,
    summary_csv, GenerateOptions,
};
use crate::nn::checkpoint::Checkpoint;
use crate::rbm::Sampler;
use crate::smiles::{prepare_dataset, read_smiles_file, DEFAULT_MAX_LEN};
use crate::train::{encode_all, load_model, LoadedModel, RunConfig, TrainError, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Sweeps run on fresh persistent chains before generation when the
/// checkpoint carries none.
const GENERATION_BURN_IN: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "dvae",
    version,
    about = "Discrete VAE with an RBM prior for SMILES"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Gibbs,
    Simanneal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a SMILES file and write train/valid splits plus a vocabulary.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Train from a run config, optionally resuming from a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Loss of a checkpoint on one split, with an AIS estimate of log Z.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Valid)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample molecules from the prior.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(short = 'n', long = "n")]
        n: usize,
        #[arg(long, value_enum, default_value_t = SamplerArg::Gibbs)]
        sampler: SamplerArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DECODE)]
        max_len: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long)]
        greedy: bool,
    },
    /// Validity, molecular weight and similarity summary of a SMILES file.
    Metrics {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        train_corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the prior of a checkpoint as an Ising problem.
    Ising {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    read_smiles_file(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<LoadedModel, Failure> {
    let ck = Checkpoint::load(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok(load_model(&ck)?)
}

/// Path with `suffix` appended to the file stem, keeping the directory.
fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Prepare {
            input,
            out: dir,
            seed,
            max_len,
        } => {
            let lines: Vec<String> = read_lines(&input)?
                .into_iter()
                .filter_map(|l| l.split([',', ' ', '\t']).next().map(str::to_string))
                .filter(|s| !s.eq_ignore_ascii_case("smiles"))
                .collect();
            let corpus = prepare_dataset(&lines, max_len, seed).map_err(data)?;
            corpus
                .write_dir(&dir)
                .map_err(|e| data(format!("{}: {e}", dir.display())))?;
            let _ = writeln!(
                out,
                "kept {} train, {} valid, {} rejected, vocabulary {}",
                corpus.train.len(),
                corpus.valid.len(),
                corpus.report.total(),
                corpus.vocab.len()
            );
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::from_file(&config)?;
            let mut t = match resume {
                Some(p) => {
                    let ck =
                        Checkpoint::load(&p).map_err(|e| data(format!("{}: {e}", p.display())))?;
                    Trainer::resume(cfg, &ck)?
                }
                None => Trainer::new(cfg)?,
            };
            t.run()?;
            let _ = write!(out, "{}", metrics_csv(&t.records));
        }
        Command::Evaluate { ckpt, split, seed } => {
            let m = load(&ckpt)?;
            let corpus = crate::smiles::load_corpus_dir(&m.run.corpus).map_err(data)?;
            let (name, smiles) = match split {
                SplitArg::Train => ("train", corpus.train),
                SplitArg::Valid => ("valid", corpus.valid),
            };
            let seqs = encode_all(&m.vocab, &smiles)?;
            let rbm = m.model.rbm.read(&m.store);
            let z = ais_logz(&rbm, &m.run.ais, seed);
            let l = evaluate_split(&m.model, &m.store, &seqs, m.run.beta, z.log_z, seed)
                .map_err(data)?;
            let rec = EpochRecord {
                epoch: 0,
                split: name.into(),
                total: l.total,
                recon: l.recon,
                kl: l.kl,
                logz: z.log_z,
                lr: 0.0,
                seconds: 0.0,
            };
            let _ = write!(out, "{}", metrics_csv(&[rec]));
        }
        Command::Generate {
            ckpt,
            n,
            sampler,
            seed,
            out: path,
            max_len,
            temperature,
            greedy,
        } => {
            if !(temperature > 0.0) {
                return Err(Failure::Usage("temperature must be positive".into()));
            }
            let m = load(&ckpt)?;
            let rbm = m.model.rbm.read(&m.store);
            let mut s = match sampler {
                SamplerArg::Gibbs => {
                    let mut s =
                        Sampler::gibbs_pcd(rbm.units(), m.run.chains.max(1), m.run.pcd_k, seed);
                    if m.chains.len() == s.chains.len()
                        && m.chains.iter().all(|c| c.len() == rbm.units())
                    {
                        s.chains = m.chains.clone();
                    } else {
                        s.advance_chains(&rbm, GENERATION_BURN_IN).map_err(data)?;
                    }
                    s
                }
                SamplerArg::Simanneal => Sampler::sim_anneal(m.run.anneal, seed).map_err(data)?,
            };
            let corpus = crate::smiles::load_corpus_dir(&m.run.corpus).map_err(data)?;
            let reference = fingerprints_of(&corpus.train);
            let mode = if greedy {
                DecodeMode::Greedy
            } else {
                DecodeMode::Multinomial { temperature }
            };
            let mols = generate_molecules(
                &m.model,
                &m.store,
                &m.vocab,
                &mut s,
                n,
                seed,
                &reference,
                GenerateOptions { max_len, mode },
            )
            .map_err(data)?;
            let mut smi: String = mols.iter().map(|x| format!("{}\n", x.smiles)).collect();
            if mols.is_empty() {
                smi.clear();
            }
            write(&path, &smi)?;
            write(&sibling(&path, "", "csv"), &molecules_csv(&mols))?;
            write(&sibling(&path, "_hist", "csv"), &histograms_csv(&mols))?;
            let _ = write!(out, "{}", summary_csv(&summarize(&mols)));
        }
        Command::Metrics {
            generated,
            train_corpus,
            out: path,
        } => {
            let gen = read_lines(&generated)?;
            let train = if train_corpus.is_dir() {
                crate::smiles::load_corpus_dir(&train_corpus)
                    .map_err(data)?
                    .train
            } else {
                read_lines(&train_corpus)?
            };
            let reference = fingerprints_of(&train);
            let csv = summary_csv(&summarize(&score_all(&gen, &reference)));
            write(&path, &csv)?;
            let _ = write!(out, "{csv}");
        }
        Command::Ising { ckpt, out: path } => {
            let m = load(&ckpt)?;
            write(&path, &m.model.rbm.read(&m.store).to_ising().to_text())?;
        }
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DATA
        }
    }
}
