use super::graph::MolGraph;

pub const FINGERPRINT_BITS: usize = 2048;
const WORDS: usize = FINGERPRINT_BITS / 64;
/// Longest path, in bonds, that contributes to the fingerprint.
pub const MAX_PATH_BONDS: usize = 7;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hashed linear-path fingerprint.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: [u64; WORDS],
}

impl std::fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fingerprint({} bits set)", self.popcount())
    }
}

impl Default for Fingerprint {
    fn default() -> Self {
        Self { words: [0; WORDS] }
    }
}

impl Fingerprint {
    pub fn from_bits<I: IntoIterator<Item = usize>>(bits: I) -> Self {
        let mut fp = Self::default();
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % FINGERPRINT_BITS;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn len(&self) -> usize {
        FINGERPRINT_BITS
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

fn atom_label(g: &MolGraph, i: usize, out: &mut Vec<u8>) {
    let a = &g.atoms[i];
    out.extend_from_slice(a.element.as_bytes());
    out.push(if a.aromatic { b'a' } else { b'A' });
}

/// Encoding of a path that is identical for both traversal directions.
fn canonical_path(g: &MolGraph, atoms: &[usize], bonds: &[u8]) -> Vec<u8> {
    let encode = |order: &mut dyn Iterator<Item = usize>, rev: bool| {
        let mut out = Vec::new();
        let idx: Vec<usize> = order.collect();
        for (k, &a) in idx.iter().enumerate() {
            atom_label(g, a, &mut out);
            if k + 1 < idx.len() {
                let b = if rev {
                    bonds[bonds.len() - 1 - k]
                } else {
                    bonds[k]
                };
                out.push(b'0' + b);
            }
        }
        out
    };
    let fwd = encode(&mut atoms.iter().copied(), false);
    let rev = encode(&mut atoms.iter().rev().copied(), true);
    fwd.min(rev)
}

/// Hash every simple path of 0..=7 bonds into a 2048-bit vector.
pub fn fingerprint(g: &MolGraph) -> Fingerprint {
    let adj = g.adjacency();
    let mut fp = Fingerprint::default();
    let mut atoms = Vec::with_capacity(MAX_PATH_BONDS + 1);
    let mut bonds = Vec::with_capacity(MAX_PATH_BONDS);
    let mut on_path = vec![false; g.atoms.len()];
    for start in 0..g.atoms.len() {
        atoms.push(start);
        on_path[start] = true;
        walk(g, &adj, &mut atoms, &mut bonds, &mut on_path, &mut fp);
        on_path[start] = false;
        atoms.pop();
    }
    fp
}

fn walk(
    g: &MolGraph,
    adj: &[Vec<(usize, super::graph::BondOrder)>],
    atoms: &mut Vec<usize>,
    bonds: &mut Vec<u8>,
    on_path: &mut [bool],
    fp: &mut Fingerprint,
) {
    let key = canonical_path(g, atoms, bonds);
    fp.set((fnv1a(&key) % FINGERPRINT_BITS as u64) as usize);
    if bonds.len() == MAX_PATH_BONDS {
        return;
    }
    let last = *atoms.last().expect("path is never empty");
    for &(next, order) in &adj[last] {
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        atoms.push(next);
        bonds.push(order.code());
        walk(g, adj, atoms, bonds, on_path, fp);
        bonds.pop();
        atoms.pop();
        on_path[next] = false;
    }
}

/// Jaccard index of the set bits; 1.0 for two empty fingerprints.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::{parse, tokenize};
    use std::collections::BTreeSet;

    fn graph(s: &str) -> MolGraph {
        parse(&tokenize(s).unwrap()).unwrap()
    }

    #[test]
    fn deterministic() {
        let g = graph("CC(=O)Oc1ccccc1C(=O)O");
        assert_eq!(fingerprint(&g), fingerprint(&g));
    }

    #[test]
    fn single_atom_sets_one_bit() {
        let fp = fingerprint(&graph("C"));
        assert_eq!(fp.popcount(), 1);
        let expected = (fnv1a(b"CA") % FINGERPRINT_BITS as u64) as usize;
        assert!(fp.get(expected));
    }

    #[test]
    fn traversal_order_independent() {
        // CCO paths: C, C, O, C-C, C-O, C-C-O. Written OCC the same multiset appears.
        let enumerate = |s: &str| -> BTreeSet<Vec<u8>> {
            let g = graph(s);
            let mut keys = BTreeSet::new();
            let n = g.atoms.len();
            for i in 0..n {
                keys.insert(canonical_path(&g, &[i], &[]));
            }
            for b in &g.bonds {
                keys.insert(canonical_path(&g, &[b.a, b.b], &[b.order.code()]));
            }
            keys
        };
        let a = enumerate("CCO");
        let b = enumerate("OCC");
        assert_eq!(a, b);
        assert_eq!(fingerprint(&graph("CCO")), fingerprint(&graph("OCC")));
        assert_eq!(
            fingerprint(&graph("CCO")).popcount(),
            fingerprint(&graph("C(O)C")).popcount()
        );
    }

    #[test]
    fn tanimoto_cases() {
        let x = Fingerprint::from_bits([1, 5, 900]);
        assert_eq!(tanimoto(&x, &x), 1.0);
        let y = Fingerprint::from_bits([2, 6]);
        assert_eq!(tanimoto(&x, &y), 0.0);
        // 1100 vs 1010: one shared bit out of three
        let a = Fingerprint::from_bits([0, 1]);
        let b = Fingerprint::from_bits([0, 2]);
        assert!((tanimoto(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            tanimoto(&Fingerprint::default(), &Fingerprint::default()),
            1.0
        );
    }
}
