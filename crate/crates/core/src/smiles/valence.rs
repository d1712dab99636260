use super::elements::{self, allowed_valences};
use super::graph::{BondOrder, MolGraph};
use super::SmilesError;

/// Outcome of the valence check for one molecule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    /// Indices of atoms that break a valence rule, ascending.
    pub violations: Vec<usize>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct AtomValence {
    implicit_h: u32,
    /// Aromatic atom that must take one ring double bond in a Kekulé form.
    needs_double: bool,
    violation: bool,
}

/// Per-atom valence bookkeeping.
///
/// Aromatic bonds count 1 each; every aromatic atom whose lowest fitting
/// valence leaves a free unit must receive exactly one ring double bond, and
/// those atoms have to admit a perfect matching over aromatic bonds.
fn analyse(g: &MolGraph) -> Vec<AtomValence> {
    let adj = g.adjacency();
    let mut out = vec![AtomValence::default(); g.atoms.len()];
    for (i, atom) in g.atoms.iter().enumerate() {
        let mut n_aromatic = 0u32;
        let mut other = 0u32;
        for &(_, order) in &adj[i] {
            match order {
                BondOrder::Aromatic => n_aromatic += 1,
                o => other += o.code() as u32,
            }
        }
        let used = n_aromatic + other + atom.explicit_h;
        let Some(allowed) = allowed_valences(&atom.element, atom.charge) else {
            out[i].violation = atom.element != "*" && !elements::is_known(&atom.element);
            continue;
        };
        let fit = allowed.iter().copied().find(|&v| v >= used);
        if atom.aromatic && n_aromatic == 0 {
            // aromatic atom outside any ring
            out[i].violation = true;
            continue;
        }
        let Some(target) = fit else {
            out[i].violation = true;
            continue;
        };
        let spare = target - used;
        if n_aromatic > 0 {
            let needs_double = spare >= 1;
            out[i].needs_double = needs_double;
            if !atom.bracket {
                out[i].implicit_h = spare - needs_double as u32;
            }
        } else if !atom.bracket {
            out[i].implicit_h = spare;
        }
    }

    // Kekulé feasibility over the aromatic subgraph
    let needy: Vec<bool> = out.iter().map(|a| a.needs_double && !a.violation).collect();
    let mut partner: Vec<Option<usize>> = vec![None; g.atoms.len()];
    let aromatic_adj: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter()
                .filter(|(j, o)| *o == BondOrder::Aromatic && needy[i] && needy[*j])
                .map(|(j, _)| *j)
                .collect()
        })
        .collect();
    let mut component = vec![usize::MAX; g.atoms.len()];
    for start in 0..g.atoms.len() {
        if !needy[start] || component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = start;
        while let Some(u) = stack.pop() {
            for &w in &aromatic_adj[u] {
                if component[w] == usize::MAX {
                    component[w] = start;
                    stack.push(w);
                }
            }
        }
        let members: Vec<bool> = (0..g.atoms.len()).map(|i| component[i] == start).collect();
        let mut budget = 200_000usize;
        if !perfect_matching(&members, &aromatic_adj, &mut partner, &mut budget) {
            for (i, m) in members.iter().enumerate() {
                if *m {
                    out[i].violation = true;
                }
            }
        }
    }
    out
}

fn perfect_matching(
    needy: &[bool],
    adj: &[Vec<usize>],
    partner: &mut [Option<usize>],
    budget: &mut usize,
) -> bool {
    let Some(u) = (0..needy.len()).find(|&i| needy[i] && partner[i].is_none()) else {
        return true;
    };
    for &w in &adj[u] {
        if partner[w].is_some() {
            continue;
        }
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        partner[u] = Some(w);
        partner[w] = Some(u);
        if perfect_matching(needy, adj, partner, budget) {
            return true;
        }
        partner[u] = None;
        partner[w] = None;
    }
    false
}

/// Check every atom against its element's allowed valences.
pub fn check_valence(g: &MolGraph) -> ValidityReport {
    let violations = analyse(g)
        .iter()
        .enumerate()
        .filter(|(_, a)| a.violation)
        .map(|(i, _)| i)
        .collect();
    ValidityReport { violations }
}

/// Implicit hydrogen count per atom (zero for bracket atoms and violators).
pub fn implicit_hydrogens(g: &MolGraph) -> Vec<u32> {
    analyse(g)
        .iter()
        .map(|a| if a.violation { 0 } else { a.implicit_h })
        .collect()
}

/// Average molecular weight in g/mol including implicit hydrogens.
pub fn molecular_weight(g: &MolGraph) -> Result<f64, SmilesError> {
    let hs = implicit_hydrogens(g);
    let h_weight = elements::hydrogen_weight();
    let mut total = 0.0;
    for (atom, h) in g.atoms.iter().zip(hs) {
        let w = elements::atomic_weight(&atom.element)
            .ok_or_else(|| SmilesError::UnknownElement(atom.element.clone()))?;
        total += w + (atom.explicit_h + h) as f64 * h_weight;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::{parse, tokenize};

    fn graph(s: &str) -> MolGraph {
        parse(&tokenize(s).unwrap()).unwrap()
    }

    #[test]
    fn simple_valid() {
        for s in [
            "C",
            "O",
            "CCO",
            "c1ccccc1",
            "c1cc[nH]c1",
            "o1cccc1",
            "s1cccc1",
            "O=c1cccc[nH]1",
        ] {
            assert!(check_valence(&graph(s)).is_valid(), "{s}");
        }
        for s in [
            "C[N+](=O)[O-]",
            "c1cc[n+](C)cc1",
            "CS(=O)(=O)N",
            "OP(=O)(O)O",
            "[NH4+]",
            "C#N",
        ] {
            assert!(check_valence(&graph(s)).is_valid(), "{s}");
        }
    }

    #[test]
    fn five_bonded_carbon_is_flagged() {
        let r = check_valence(&graph("C(C)(C)(C)(C)C"));
        assert_eq!(r.violations, vec![0]);
    }

    #[test]
    fn kekule_failures() {
        // pyrrole without the N-H cannot be kekulised
        assert!(!check_valence(&graph("c1ccnc1")).is_valid());
        // aromatic atom outside a ring
        assert!(!check_valence(&graph("cC")).is_valid());
        assert!(!check_valence(&graph("c1ccccc1(C)C")).is_valid());
    }

    #[test]
    fn implicit_h_counts() {
        assert_eq!(implicit_hydrogens(&graph("C")), vec![4]);
        assert_eq!(implicit_hydrogens(&graph("CC=O")), vec![3, 1, 0]);
        assert_eq!(implicit_hydrogens(&graph("c1ccccc1")), vec![1; 6]);
        assert_eq!(
            implicit_hydrogens(&graph("c1cc[nH]c1")),
            vec![1, 1, 1, 0, 1]
        );
        assert_eq!(implicit_hydrogens(&graph("[CH3]C")), vec![0, 3]);
        assert_eq!(implicit_hydrogens(&graph("CS(C)=O")), vec![3, 0, 3, 0]);
    }

    #[test]
    fn weights() {
        // 12.011 + 4 * 1.008
        assert!((molecular_weight(&graph("C")).unwrap() - 16.043).abs() < 0.01);
        // 15.999 + 2 * 1.008
        assert!((molecular_weight(&graph("O")).unwrap() - 18.015).abs() < 0.01);
        assert_eq!(molecular_weight(&MolGraph::default()).unwrap(), 0.0);
        // benzene C6H6 = 78.114
        assert!((molecular_weight(&graph("c1ccccc1")).unwrap() - 78.114).abs() < 0.01);
        assert!(matches!(
            molecular_weight(&graph("*C")),
            Err(SmilesError::UnknownElement(_))
        ));
    }
}
