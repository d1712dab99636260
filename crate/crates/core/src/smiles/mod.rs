//! SMILES lexing, graph construction, valence validity, molecular weight,
//! path fingerprints and corpus preparation.

mod dataset;
mod elements;
mod fingerprint;
mod graph;
mod token;
mod valence;
mod vocab;

use thiserror::Error;

pub use dataset::{
    largest_fragment, load_corpus_dir, prepare_dataset, read_smiles_file, validate, CorpusDir,
    PreparedCorpus, Rejection, RejectionReport, DEFAULT_MAX_LEN, REPORT_FILE, TRAIN_FILE,
    VALID_FILE, VOCAB_FILE,
};
pub use elements::{allowed_valences, atomic_weight, ORGANIC_SUBSET};
pub use fingerprint::{fingerprint, tanimoto, Fingerprint, FINGERPRINT_BITS, MAX_PATH_BONDS};
pub use graph::{parse, Atom, Bond, BondOrder, MolGraph};
pub use token::{detokenize, tokenize, Token, TokenKind};
pub use valence::{check_valence, implicit_hydrogens, molecular_weight, ValidityReport};
pub use vocab::{Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    EmptyInput,
    #[error("no lexeme starts at byte {0}")]
    UnlexableCharacter(usize),
    #[error("bracket opened at byte {0} is never closed")]
    UnterminatedBracket(usize),
    #[error("malformed bracket atom {0}")]
    InvalidBracketAtom(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("branch opened but never closed")]
    UnclosedBranch,
    #[error("')' without a matching '('")]
    UnmatchedCloseBranch,
    #[error("empty branch")]
    EmptyBranch,
    #[error("ring bond {0} is never closed")]
    UnmatchedRingBond(u32),
    #[error("ring bond {0} closes with a different bond order")]
    RingBondMismatch(u32),
    #[error("bond symbol without an atom on both sides")]
    DanglingBond,
    #[error("atom bonded to itself")]
    SelfBond,
    #[error("two bonds between the same pair of atoms")]
    DuplicateBond,
    #[error("no molecule survived filtering")]
    EmptyCorpus,
    #[error("bad vocabulary file: {0}")]
    BadVocabulary(String),
    #[error("{0}")]
    Io(String),
}

/// Outcome of running a SMILES string through lexing, parsing and the
/// valence check.
#[derive(Debug, Clone)]
pub struct MoleculeCheck {
    pub graph: Option<MolGraph>,
    pub valid: bool,
}

/// Full validity pipeline used by the generation metrics.
pub fn check_smiles(smiles: &str) -> MoleculeCheck {
    match tokenize(smiles).and_then(|t| parse(&t)) {
        Ok(g) => {
            let valid = !g.atoms.is_empty() && check_valence(&g).is_valid();
            MoleculeCheck {
                graph: Some(g),
                valid,
            }
        }
        Err(_) => MoleculeCheck {
            graph: None,
            valid: false,
        },
    }
}
