use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::elements::ORGANIC_SUBSET;
use super::token::{tokenize, Token, TokenKind};
use super::vocab::Vocabulary;
use super::{check_valence, parse, MolGraph, SmilesError};
use crate::rng::stream;

pub const DEFAULT_MAX_LEN: usize = 200;
pub const TRAIN_FILE: &str = "train.smi";
pub const VALID_FILE: &str = "valid.smi";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Empty,
    TooLong,
    Unlexable,
    NonOrganic,
    ParseError,
    InvalidValence,
}

impl Rejection {
    pub const ALL: [Rejection; 6] = [
        Rejection::Empty,
        Rejection::TooLong,
        Rejection::Unlexable,
        Rejection::NonOrganic,
        Rejection::ParseError,
        Rejection::InvalidValence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rejection::Empty => "empty",
            Rejection::TooLong => "too_long",
            Rejection::Unlexable => "unlexable",
            Rejection::NonOrganic => "non_organic",
            Rejection::ParseError => "parse_error",
            Rejection::InvalidValence => "invalid_valence",
        }
    }
}

/// Rejection counts by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub empty: usize,
    pub too_long: usize,
    pub unlexable: usize,
    pub non_organic: usize,
    pub parse_error: usize,
    pub invalid_valence: usize,
}

impl RejectionReport {
    fn bump(&mut self, r: Rejection) {
        *self.slot(r) += 1;
    }

    fn slot(&mut self, r: Rejection) -> &mut usize {
        match r {
            Rejection::Empty => &mut self.empty,
            Rejection::TooLong => &mut self.too_long,
            Rejection::Unlexable => &mut self.unlexable,
            Rejection::NonOrganic => &mut self.non_organic,
            Rejection::ParseError => &mut self.parse_error,
            Rejection::InvalidValence => &mut self.invalid_valence,
        }
    }

    pub fn count(&self, r: Rejection) -> usize {
        let mut copy = self.clone();
        *copy.slot(r)
    }

    pub fn total(&self) -> usize {
        Rejection::ALL.iter().map(|r| self.count(*r)).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# format_version=1\ncause,count\n");
        for r in Rejection::ALL {
            s.push_str(&format!("{},{}\n", r.name(), self.count(r)));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedCorpus {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub vocab: Vocabulary,
    pub report: RejectionReport,
}

fn is_hydrogen(t: &Token) -> bool {
    if t.kind != TokenKind::BracketAtom {
        return false;
    }
    let body = t.text[1..]
        .trim_start_matches(|c: char| c.is_ascii_digit())
        .as_bytes();
    body.first() == Some(&b'H') && !body.get(1).is_some_and(u8::is_ascii_lowercase)
}

fn heavy_atoms(tokens: &[Token]) -> usize {
    tokens
        .iter()
        .filter(|t| t.is_atom() && !is_hydrogen(t))
        .count()
}

/// Keep the fragment with the most heavy atoms; ties go to the longer string,
/// then to the lexicographically smaller one.
pub fn largest_fragment(smiles: &str) -> Result<String, SmilesError> {
    if !smiles.contains('.') {
        return Ok(smiles.to_string());
    }
    let mut best: Option<(usize, &str)> = None;
    for frag in smiles.split('.').filter(|f| !f.is_empty()) {
        let n = heavy_atoms(&tokenize(frag)?);
        let better = match best {
            None => true,
            Some((bn, bs)) => {
                (n, frag.len(), std::cmp::Reverse(frag)) > (bn, bs.len(), std::cmp::Reverse(bs))
            }
        };
        if better {
            best = Some((n, frag));
        }
    }
    best.map(|(_, f)| f.to_string())
        .ok_or(SmilesError::EmptyInput)
}

/// Tokenize, parse and valence-check one molecule, requiring organic-subset atoms.
pub fn validate(smiles: &str) -> Result<(Vec<Token>, MolGraph), Rejection> {
    let tokens = tokenize(smiles).map_err(|_| Rejection::Unlexable)?;
    let graph = parse(&tokens).map_err(|e| match e {
        SmilesError::UnknownElement(_) => Rejection::NonOrganic,
        _ => Rejection::ParseError,
    })?;
    if graph
        .atoms
        .iter()
        .any(|a| !ORGANIC_SUBSET.contains(&a.element.as_str()))
    {
        return Err(Rejection::NonOrganic);
    }
    if !check_valence(&graph).is_valid() {
        return Err(Rejection::InvalidValence);
    }
    Ok((tokens, graph))
}

fn clean(line: &str, max_len: usize) -> Result<String, Rejection> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err(Rejection::Empty);
    }
    let main = largest_fragment(trimmed).map_err(|_| Rejection::Unlexable)?;
    if main.len() > max_len {
        return Err(Rejection::TooLong);
    }
    validate(&main)?;
    Ok(main)
}

/// Filter, shuffle with `seed`, and split 80/20; the vocabulary comes from
/// the training split only.
pub fn prepare_dataset<S: AsRef<str> + Sync>(
    lines: &[S],
    max_len: usize,
    seed: u64,
) -> Result<PreparedCorpus, SmilesError> {
    let cleaned: Vec<Result<String, Rejection>> = lines
        .par_iter()
        .map(|l| clean(l.as_ref(), max_len))
        .collect();
    let mut report = RejectionReport::default();
    let mut kept = Vec::new();
    for c in cleaned {
        match c {
            Ok(s) => kept.push(s),
            Err(r) => report.bump(r),
        }
    }
    if kept.is_empty() {
        return Err(SmilesError::EmptyCorpus);
    }
    let mut rng = stream(seed, "dataset-split", 0, 0);
    kept.shuffle(&mut rng);
    let n_train = (kept.len() * 8 + 5) / 10;
    let valid = kept.split_off(n_train);
    let train = kept;
    let train_tokens: Vec<Vec<Token>> = train
        .iter()
        .map(|s| tokenize(s))
        .collect::<Result<_, _>>()?;
    let vocab = Vocabulary::from_tokens(train_tokens.iter().flatten().map(|t| t.text.as_str()));
    Ok(PreparedCorpus {
        train,
        valid,
        vocab,
        report,
    })
}

fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut s = lines.join("\n");
    if !lines.is_empty() {
        s.push('\n');
    }
    fs::write(path, s)
}

impl PreparedCorpus {
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        write_lines(&dir.join(TRAIN_FILE), &self.train)?;
        write_lines(&dir.join(VALID_FILE), &self.valid)?;
        fs::write(dir.join(VOCAB_FILE), self.vocab.to_text())?;
        fs::write(dir.join(REPORT_FILE), self.report.to_csv())
    }
}

/// Train/valid SMILES and vocabulary as written by [`PreparedCorpus::write_dir`].
#[derive(Debug, Clone)]
pub struct CorpusDir {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub vocab: Vocabulary,
}

pub fn read_smiles_file(path: &Path) -> std::io::Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn load_corpus_dir(dir: &Path) -> Result<CorpusDir, SmilesError> {
    let io = |e: std::io::Error| SmilesError::Io(format!("{}: {e}", dir.display()));
    let train = read_smiles_file(&dir.join(TRAIN_FILE)).map_err(io)?;
    let valid = read_smiles_file(&dir.join(VALID_FILE)).map_err(io)?;
    let vocab = Vocabulary::from_text(&fs::read_to_string(dir.join(VOCAB_FILE)).map_err(io)?)?;
    Ok(CorpusDir {
        train,
        valid,
        vocab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn salt_is_dropped() {
        let c = prepare_dataset(&["CCO.[Na+]"], 200, 1).unwrap();
        let all: Vec<_> = c.train.iter().chain(&c.valid).collect();
        assert_eq!(all, ["CCO"]);
        assert_eq!(largest_fragment("[Na+].CCO").unwrap(), "CCO");
        // tie on heavy atoms: longer string wins, then lexicographic order
        assert_eq!(largest_fragment("CO.C=O").unwrap(), "C=O");
        assert_eq!(largest_fragment("OC.CO").unwrap(), "CO");
        assert_eq!(largest_fragment("[H][H].C").unwrap(), "C");
    }

    #[test]
    fn split_is_80_20_and_repeatable() {
        let lines: Vec<String> = (1..=10).map(|n| "C".repeat(n)).collect();
        let a = prepare_dataset(&lines, 200, 7).unwrap();
        assert_eq!((a.train.len(), a.valid.len()), (8, 2));
        let b = prepare_dataset(&lines, 200, 7).unwrap();
        assert_eq!(a, b);
        let c = prepare_dataset(&lines, 200, 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn rejections_are_counted() {
        let long = "C".repeat(201);
        let ok = "C".repeat(200);
        let lines = [
            long.as_str(),
            ok.as_str(),
            "",
            "C[Si](C)C",
            "C(C)(C)(C)(C)C",
            "C1CC",
            "CX",
            "[Na+]",
        ];
        let c = prepare_dataset(&lines, 200, 0).unwrap();
        assert_eq!(c.report.too_long, 1);
        assert_eq!(c.report.empty, 1);
        assert_eq!(c.report.non_organic, 2);
        assert_eq!(c.report.invalid_valence, 1);
        assert_eq!(c.report.parse_error, 1);
        assert_eq!(c.report.unlexable, 1);
        assert_eq!(c.train.len() + c.valid.len(), 1);
        assert!(c.report.to_csv().contains("too_long,1\n"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(
            prepare_dataset(&["", "CX"], 200, 0),
            Err(SmilesError::EmptyCorpus)
        );
    }

    #[test]
    fn vocab_from_train_only() {
        let lines = ["CCO", "CCN", "CCCl", "CCBr", "CCF"];
        let c = prepare_dataset(&lines, 200, 3).unwrap();
        for s in &c.train {
            for t in tokenize(s).unwrap() {
                assert_ne!(c.vocab.id(&t.text), crate::smiles::UNK);
            }
        }
        assert_eq!(
            c.vocab.len(),
            4 + {
                let mut set: Vec<String> = c
                    .train
                    .iter()
                    .flat_map(|s| tokenize(s).unwrap())
                    .map(|t| t.text)
                    .collect();
                set.sort();
                set.dedup();
                set.len()
            }
        );
    }
}
