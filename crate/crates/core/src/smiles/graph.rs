use std::collections::{BTreeMap, VecDeque};

use super::elements;
use super::token::{Token, TokenKind};
use super::SmilesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Aromatic,
    Double,
    Triple,
}

impl BondOrder {
    pub fn as_f64(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Aromatic => 1.5,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Aromatic => 4,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Element symbol with capitalised first letter ("C", "Cl"), or "*".
    pub element: String,
    pub aromatic: bool,
    pub charge: i32,
    /// Hydrogens written inside a bracket atom.
    pub explicit_h: u32,
    /// Bracket atoms carry no implicit hydrogens.
    pub bracket: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolGraph {
    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = (usize, BondOrder)> + '_ {
        self.bonds.iter().filter_map(move |b| {
            if b.a == atom {
                Some((b.b, b.order))
            } else if b.b == atom {
                Some((b.a, b.order))
            } else {
                None
            }
        })
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.a].push((b.b, b.order));
            adj[b.b].push((b.a, b.order));
        }
        adj
    }

    /// Heavy atoms: everything except hydrogen atoms.
    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != "H").count()
    }

    /// True when removing bond `idx` disconnects its endpoints.
    fn is_bridge(&self, adj: &[Vec<(usize, usize)>], idx: usize) -> bool {
        let Bond { a, b, .. } = self.bonds[idx];
        let mut seen = vec![false; self.atoms.len()];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(u) = queue.pop_front() {
            for &(w, bi) in &adj[u] {
                if bi == idx || seen[w] {
                    continue;
                }
                if w == b {
                    return false;
                }
                seen[w] = true;
                queue.push_back(w);
            }
        }
        true
    }
}

fn bond_symbol(text: &str) -> BondOrder {
    match text {
        "=" => BondOrder::Double,
        "#" => BondOrder::Triple,
        ":" => BondOrder::Aromatic,
        _ => BondOrder::Single,
    }
}

fn parse_bracket(text: &str) -> Result<Atom, SmilesError> {
    let invalid = || SmilesError::InvalidBracketAtom(text.to_string());
    let inner = &text[1..text.len() - 1];
    let b = inner.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i >= b.len() {
        return Err(invalid());
    }
    let (element, aromatic) = if b[i] == b'*' {
        i += 1;
        ("*".to_string(), false)
    } else if b[i].is_ascii_uppercase() {
        let two = inner
            .get(i..i + 2)
            .filter(|s| s.as_bytes()[1].is_ascii_lowercase());
        match two {
            Some(sym) if elements::is_known(sym) => {
                i += 2;
                (sym.to_string(), false)
            }
            _ => {
                let sym = &inner[i..i + 1];
                if !elements::is_known(sym) {
                    return Err(SmilesError::UnknownElement(sym.to_string()));
                }
                i += 1;
                (sym.to_string(), false)
            }
        }
    } else if b[i].is_ascii_lowercase() {
        let sym = ["se", "as", "te"]
            .into_iter()
            .find(|s| inner[i..].starts_with(s))
            .or_else(|| {
                ["b", "c", "n", "o", "p", "s"]
                    .into_iter()
                    .find(|s| inner[i..].starts_with(s))
            })
            .ok_or_else(invalid)?;
        i += sym.len();
        let mut upper = sym.to_string();
        upper[..1].make_ascii_uppercase();
        (upper, true)
    } else {
        return Err(invalid());
    };
    while i < b.len() && b[i] == b'@' {
        i += 1;
    }
    let mut explicit_h = 0;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        explicit_h = 1;
        if i < b.len() && b[i].is_ascii_digit() {
            explicit_h = (b[i] - b'0') as u32;
            i += 1;
        }
    }
    let mut charge = 0i32;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        let sym = b[i];
        i += 1;
        let mut magnitude = 1;
        if i < b.len() && b[i].is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            magnitude = inner[start..i].parse::<i32>().map_err(|_| invalid())?;
        } else {
            while i < b.len() && b[i] == sym {
                magnitude += 1;
                i += 1;
            }
        }
        charge = sign * magnitude;
    }
    if i < b.len() && b[i] == b':' {
        i += 1;
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return Err(invalid());
        }
    }
    if i != b.len() {
        return Err(invalid());
    }
    Ok(Atom {
        element,
        aromatic,
        charge,
        explicit_h,
        bracket: true,
    })
}

fn plain_atom(token: &Token) -> Atom {
    let (element, aromatic) = match token.kind {
        TokenKind::AromaticAtom => (token.text.to_ascii_uppercase(), true),
        _ => (token.text.clone(), false),
    };
    Atom {
        element,
        aromatic,
        charge: 0,
        explicit_h: 0,
        bracket: false,
    }
}

fn connect(
    g: &mut MolGraph,
    implicit: &mut Vec<bool>,
    a: usize,
    b: usize,
    order: Option<BondOrder>,
) -> Result<(), SmilesError> {
    if a == b {
        return Err(SmilesError::SelfBond);
    }
    if g.bonds
        .iter()
        .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
    {
        return Err(SmilesError::DuplicateBond);
    }
    let both_aromatic = g.atoms[a].aromatic && g.atoms[b].aromatic;
    let resolved = order.unwrap_or(if both_aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    });
    g.bonds.push(Bond {
        a,
        b,
        order: resolved,
    });
    implicit.push(order.is_none() && both_aromatic);
    Ok(())
}

fn ring_label(text: &str) -> u32 {
    text.trim_start_matches('%').parse().unwrap_or(0)
}

/// Build a molecular graph from tokens.
///
/// Stereo marks are accepted and dropped. An unmarked bond between two
/// aromatic atoms is aromatic when it lies on a ring and single otherwise.
pub fn parse(tokens: &[Token]) -> Result<MolGraph, SmilesError> {
    // balance check first so "C((" reports the unclosed branch
    let mut depth = 0i32;
    for t in tokens {
        match t.text.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth < 0 {
                    return Err(SmilesError::UnmatchedCloseBranch);
                }
            }
            _ => {}
        }
    }
    if depth > 0 {
        return Err(SmilesError::UnclosedBranch);
    }

    let mut g = MolGraph::default();
    let mut implicit = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<BondOrder> = None;
    let mut branches: Vec<usize> = Vec::new();
    let mut atom_since_open = true;
    let mut rings: BTreeMap<u32, (usize, Option<BondOrder>)> = BTreeMap::new();

    for t in tokens {
        match t.kind {
            TokenKind::BracketAtom
            | TokenKind::OrganicAtom
            | TokenKind::AromaticAtom
            | TokenKind::Wildcard => {
                let atom = match t.kind {
                    TokenKind::BracketAtom => parse_bracket(&t.text)?,
                    TokenKind::Wildcard => Atom {
                        element: "*".into(),
                        aromatic: false,
                        charge: 0,
                        explicit_h: 0,
                        bracket: false,
                    },
                    _ => plain_atom(t),
                };
                g.atoms.push(atom);
                let idx = g.atoms.len() - 1;
                match prev {
                    Some(p) => connect(&mut g, &mut implicit, p, idx, pending.take())?,
                    None if pending.is_some() => return Err(SmilesError::DanglingBond),
                    None => {}
                }
                prev = Some(idx);
                atom_since_open = true;
            }
            TokenKind::Bond => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::DanglingBond);
                }
                pending = Some(bond_symbol(&t.text));
            }
            TokenKind::Branch if t.text == "(" => {
                if !atom_since_open {
                    return Err(SmilesError::EmptyBranch);
                }
                let p = prev.ok_or(SmilesError::EmptyBranch)?;
                if pending.is_some() {
                    return Err(SmilesError::DanglingBond);
                }
                branches.push(p);
                atom_since_open = false;
            }
            TokenKind::Branch => {
                if !atom_since_open {
                    return Err(SmilesError::EmptyBranch);
                }
                if pending.is_some() {
                    return Err(SmilesError::DanglingBond);
                }
                prev = branches.pop();
            }
            TokenKind::RingBond => {
                let p = prev.ok_or(SmilesError::DanglingBond)?;
                let label = ring_label(&t.text);
                let order = pending.take();
                match rings.remove(&label) {
                    Some((other, open_order)) => {
                        let order = match (open_order, order) {
                            (Some(x), Some(y)) if x != y => {
                                return Err(SmilesError::RingBondMismatch(label))
                            }
                            (x, y) => x.or(y),
                        };
                        connect(&mut g, &mut implicit, other, p, order)?;
                    }
                    None => {
                        rings.insert(label, (p, order));
                    }
                }
            }
            TokenKind::Dot => {
                if pending.is_some() || prev.is_none() {
                    return Err(SmilesError::DanglingBond);
                }
                prev = None;
            }
        }
    }
    if pending.is_some() {
        return Err(SmilesError::DanglingBond);
    }
    if let Some((&label, _)) = rings.iter().next() {
        return Err(SmilesError::UnmatchedRingBond(label));
    }

    // implicit aromatic bonds that are not on a ring (biaryl links) are single
    let mut adj = vec![Vec::new(); g.atoms.len()];
    for (i, b) in g.bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    let demote: Vec<usize> = (0..g.bonds.len())
        .filter(|&i| implicit[i] && g.is_bridge(&adj, i))
        .collect();
    for i in demote {
        g.bonds[i].order = BondOrder::Single;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::tokenize;

    fn graph(s: &str) -> Result<MolGraph, SmilesError> {
        parse(&tokenize(s)?)
    }

    #[test]
    fn ethane() {
        let g = graph("CC").unwrap();
        assert_eq!(g.atoms.len(), 2);
        assert_eq!(g.bonds.len(), 1);
        assert_eq!(g.bonds[0].order, BondOrder::Single);
    }

    #[test]
    fn ring_closure_triangle() {
        // C1 opens ring 1 on atom 0; C1 at the end closes it on atom 2
        let g = graph("C1CC1").unwrap();
        assert_eq!(g.atoms.len(), 3);
        assert_eq!(g.bonds.len(), 3);
        let mut pairs: Vec<_> = g
            .bonds
            .iter()
            .map(|b| (b.a.min(b.b), b.a.max(b.b)))
            .collect();
        pairs.sort();
        assert_eq!(pairs, [(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn branch_errors() {
        let toks = tokenize("C((").unwrap();
        assert_eq!(parse(&toks), Err(SmilesError::UnclosedBranch));
        assert_eq!(graph("C()C"), Err(SmilesError::EmptyBranch));
        assert_eq!(graph("C)C"), Err(SmilesError::UnmatchedCloseBranch));
        assert_eq!(graph("(C)C"), Err(SmilesError::EmptyBranch));
    }

    #[test]
    fn bond_errors() {
        assert_eq!(graph("C="), Err(SmilesError::DanglingBond));
        assert_eq!(graph("=C"), Err(SmilesError::DanglingBond));
        assert_eq!(graph("C==C"), Err(SmilesError::DanglingBond));
        assert_eq!(graph("C1CC"), Err(SmilesError::UnmatchedRingBond(1)));
        assert_eq!(graph("C11"), Err(SmilesError::SelfBond));
        assert_eq!(graph("C12CC12"), Err(SmilesError::DuplicateBond));
        assert_eq!(graph("C=1CC-1"), Err(SmilesError::RingBondMismatch(1)));
    }

    #[test]
    fn aromatic_bonds() {
        let g = graph("c1ccccc1").unwrap();
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        // biphenyl link is not on a ring
        let g = graph("c1ccccc1c1ccccc1").unwrap();
        assert_eq!(
            g.bonds
                .iter()
                .filter(|b| b.order == BondOrder::Single)
                .count(),
            1
        );
    }

    #[test]
    fn bracket_atoms() {
        let g = graph("[nH]").unwrap();
        assert_eq!(g.atoms[0].element, "N");
        assert!(g.atoms[0].aromatic);
        assert_eq!(g.atoms[0].explicit_h, 1);
        let g = graph("[13CH3-]").unwrap();
        assert_eq!((g.atoms[0].explicit_h, g.atoms[0].charge), (3, -1));
        let g = graph("[Fe++]").unwrap();
        assert_eq!(g.atoms[0].charge, 2);
        let g = graph("[N+2]").unwrap();
        assert_eq!(g.atoms[0].charge, 2);
        let g = graph("[C@@H:3]").unwrap();
        assert_eq!(g.atoms[0].explicit_h, 1);
        let g = graph("[Cl-]").unwrap();
        assert_eq!(g.atoms[0].element, "Cl");
        assert!(graph("[Xq]").is_err());
        assert!(graph("[C+H]").is_err());
    }

    #[test]
    fn stereo_is_ignored() {
        let a = graph("F/C=C/F").unwrap();
        let b = graph("FC=CF").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dot_separates_fragments() {
        let g = graph("CCO.[Na+]").unwrap();
        assert_eq!(g.atoms.len(), 4);
        assert_eq!(g.bonds.len(), 2);
        assert_eq!(graph(".C"), Err(SmilesError::DanglingBond));
    }
}
