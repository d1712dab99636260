//! SMILES handling on the bundled molecule lists, plus property tests.

use dvae::evaluation::log_mean_exp;
use dvae::generate::histogram;
use dvae::smiles::{
    check_smiles, detokenize, fingerprint, molecular_weight, prepare_dataset, read_smiles_file,
    tanimoto, tokenize, validate, Fingerprint, Rejection, Vocabulary, FINGERPRINT_BITS,
};
use proptest::prelude::*;

fn data(name: &str) -> Vec<String> {
    read_smiles_file(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("data")
            .join(name),
    )
    .unwrap()
}

#[test]
fn golden_molecules_are_valid() {
    let golden = data("golden_valid.smi");
    assert_eq!(golden.len(), 100);
    for s in &golden {
        let c = check_smiles(s);
        assert!(c.valid, "{s}");
        assert!(molecular_weight(c.graph.as_ref().unwrap()).unwrap() > 0.0);
    }
}

#[test]
fn hypervalent_molecules_are_rejected() {
    let bad = data("hypervalent.smi");
    assert_eq!(bad.len(), 20);
    for s in &bad {
        assert!(!check_smiles(s).valid, "{s}");
        assert_eq!(validate(s).unwrap_err(), Rejection::InvalidValence, "{s}");
    }
}

#[test]
fn known_molecular_weights() {
    // average atomic weights; reference values from standard tables
    for (s, mw) in [
        ("CC(=O)Oc1ccccc1C(=O)O", 180.159),
        ("Cn1c(=O)c2c(ncn2C)n(C)c1=O", 194.194),
        ("c1ccccc1", 78.114),
        ("O", 18.015),
    ] {
        let got = molecular_weight(check_smiles(s).graph.as_ref().unwrap()).unwrap();
        assert!((got - mw).abs() < 0.01, "{s}: {got}");
    }
}

#[test]
fn desk_corpus_round_trips_and_prepares_cleanly() {
    let corpus = data("desk_corpus.smi");
    assert_eq!(corpus.len(), 2000);
    for s in &corpus {
        let t = tokenize(s).unwrap();
        assert_eq!(&detokenize(&t), s);
    }
    let a = prepare_dataset(&corpus, 200, 7).unwrap();
    assert_eq!(a.report.total(), 0);
    assert_eq!((a.train.len(), a.valid.len()), (1600, 400));
    for s in &a.train {
        let ids = a.vocab.encode(&tokenize(s).unwrap());
        assert_eq!(&a.vocab.decode(&ids), s);
    }
    let b = prepare_dataset(&corpus, 200, 7).unwrap();
    assert_eq!((a.train, a.valid, a.vocab), (b.train, b.valid, b.vocab));
}

fn corpus_tokens() -> Vec<String> {
    let mut v: Vec<String> = data("golden_valid.smi")
        .iter()
        .flat_map(|s| tokenize(s).unwrap())
        .map(|t| t.text)
        .collect();
    v.sort();
    v.dedup();
    v
}

fn arb_fingerprint() -> impl Strategy<Value = Fingerprint> {
    prop::collection::vec(0..FINGERPRINT_BITS, 0..64).prop_map(Fingerprint::from_bits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tanimoto_is_symmetric_and_bounded(a in arb_fingerprint(), b in arb_fingerprint()) {
        let (x, y) = (tanimoto(&a, &b), tanimoto(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        if a.popcount() > 0 {
            prop_assert_eq!(tanimoto(&a, &a), 1.0);
        }
    }

    #[test]
    fn token_sequences_round_trip(picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
        let tokens = corpus_tokens();
        let s: String = picks.iter().map(|i| tokens[i.index(tokens.len())].as_str()).collect();
        let t = tokenize(&s).unwrap();
        prop_assert_eq!(detokenize(&t), s.clone());
        let vocab = Vocabulary::from_tokens(tokens.iter().map(String::as_str));
        prop_assert_eq!(vocab.decode(&vocab.encode(&t)), s);
    }

    #[test]
    fn fingerprints_are_deterministic(i in 0usize..100) {
        let s = &data("golden_valid.smi")[i];
        let g = check_smiles(s).graph.unwrap();
        prop_assert_eq!(fingerprint(&g), fingerprint(&g));
        prop_assert_eq!(tanimoto(&fingerprint(&g), &fingerprint(&g)), 1.0);
    }

    #[test]
    fn histogram_keeps_every_value(values in prop::collection::vec(0.0f64..2000.0, 0..100)) {
        let h = histogram(&values, 0.0, 1000.0, 40);
        prop_assert_eq!(h.len(), 40);
        prop_assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), values.len());
    }

    #[test]
    fn log_mean_exp_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..50)) {
        let direct = (xs.iter().map(|x| x.exp()).sum::<f64>() / xs.len() as f64).ln();
        prop_assert!((log_mean_exp(&xs) - direct).abs() < 1e-10);
    }
}
