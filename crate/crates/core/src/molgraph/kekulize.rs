use super::{BondOrder, Element, MolGraph};

const SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no alternating bond assignment covers aromatic atoms {unmatched:?}")]
pub struct KekulizeError {
    pub unmatched: Vec<usize>,
}

/// Whether an aromatic atom must receive one double bond inside its
/// aromatic system.
fn needs_double(g: &MolGraph, i: usize) -> bool {
    let a = g.atom(i);
    if !a.aromatic {
        return false;
    }
    let exocyclic_double = g
        .neighbors(i)
        .iter()
        .any(|&(_, b)| g.bonds()[b].order == BondOrder::Double);
    if exocyclic_double {
        return false;
    }
    let h = a.explicit_hydrogens.unwrap_or(0);
    match a.element {
        Element::C => a.charge == 0,
        Element::N | Element::P => match a.charge {
            1 => true,
            0 => h == 0 && g.degree(i) == 2,
            _ => false,
        },
        Element::O | Element::S => a.charge == 1,
        _ => a.element.symbol() == "Se" && a.charge == 1,
    }
}

/// Replaces aromatic flags and bonds with an explicit single/double pattern.
/// Double bonds are placed by a perfect matching over the aromatic atoms
/// that need one; graphs without aromatic atoms come back unchanged.
///
/// ```
/// use chemberta_core::molgraph::{kekulize, parse_smiles, BondOrder};
/// let k = kekulize(&parse_smiles("c1ccccc1").unwrap()).unwrap();
/// let doubles = k.bonds().iter().filter(|b| b.order == BondOrder::Double).count();
/// assert_eq!(doubles, 3);
/// ```
pub fn kekulize(g: &MolGraph) -> Result<MolGraph, KekulizeError> {
    let n = g.atom_count();
    let need: Vec<bool> = (0..n).map(|i| needs_double(g, i)).collect();
    let candidates: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            if !need[i] {
                return Vec::new();
            }
            g.neighbors(i)
                .iter()
                .copied()
                .filter(|&(nb, b)| need[nb] && g.bonds()[b].order == BondOrder::Aromatic)
                .collect()
        })
        .collect();

    let mut mate: Vec<Option<usize>> = vec![None; n];
    let mut budget = SEARCH_BUDGET;
    if !search(&need, &candidates, &mut mate, &mut budget) {
        let unmatched = (0..n).filter(|&i| need[i] && mate[i].is_none()).collect();
        return Err(KekulizeError { unmatched });
    }

    let mut out = MolGraph::new();
    for atom in g.atoms() {
        let mut a = atom.clone();
        a.aromatic = false;
        out.add_atom(a);
    }
    for (bi, bond) in g.bonds().iter().enumerate() {
        let order = match bond.order {
            BondOrder::Aromatic if mate[bond.begin].is_some_and(|m| m == bi) => BondOrder::Double,
            BondOrder::Aromatic => BondOrder::Single,
            o => o,
        };
        out.add_bond(bond.begin, bond.end, order).expect("copy of a valid graph");
    }
    Ok(out)
}

/// Backtracking matching, most constrained atom first. `mate[i]` holds the
/// matched bond index.
fn search(
    need: &[bool],
    candidates: &[Vec<(usize, usize)>],
    mate: &mut [Option<usize>],
    budget: &mut usize,
) -> bool {
    let mut pick: Option<(usize, usize)> = None;
    for i in 0..need.len() {
        if !need[i] || mate[i].is_some() {
            continue;
        }
        let free = candidates[i].iter().filter(|&&(nb, _)| mate[nb].is_none()).count();
        if free == 0 {
            return false;
        }
        if pick.is_none_or(|(_, best)| free < best) {
            pick = Some((i, free));
        }
    }
    let Some((atom, _)) = pick else { return true };
    for &(nb, bond) in &candidates[atom] {
        if mate[nb].is_some() {
            continue;
        }
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        mate[atom] = Some(bond);
        mate[nb] = Some(bond);
        if search(need, candidates, mate, budget) {
            return true;
        }
        mate[atom] = None;
        mate[nb] = None;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn doubles_per_atom(s: &str) -> Vec<usize> {
        let k = kekulize(&parse_smiles(s).unwrap()).unwrap();
        assert!(k.atoms().iter().all(|a| !a.aromatic));
        assert!(k.bonds().iter().all(|b| b.order != BondOrder::Aromatic));
        (0..k.atom_count())
            .map(|i| {
                k.neighbors(i)
                    .iter()
                    .filter(|&&(_, b)| k.bonds()[b].order == BondOrder::Double)
                    .count()
            })
            .collect()
    }

    #[test]
    fn benzene_alternates() {
        assert_eq!(doubles_per_atom("c1ccccc1"), [1; 6]);
    }

    #[test]
    fn heteroaromatics() {
        assert_eq!(doubles_per_atom("c1ccncc1"), [1; 6]);
        // pyrrole nitrogen keeps only single bonds
        assert_eq!(doubles_per_atom("c1cc[nH]c1"), [1, 1, 1, 0, 1]);
        assert_eq!(doubles_per_atom("c1ccoc1"), [1, 1, 1, 0, 1]);
        assert_eq!(doubles_per_atom("Cn1ccnc1")[1], 0);
        assert_eq!(doubles_per_atom("O=c1cc[nH]cc1"), [1, 1, 1, 1, 0, 1, 1]);
    }

    #[test]
    fn fused_and_odd_systems() {
        assert!(doubles_per_atom("c1ccc2ccccc2c1").iter().all(|&d| d == 1));
        // azulene: fused five- and seven-membered rings
        assert!(doubles_per_atom("c1ccc2cccc2cc1").iter().all(|&d| d == 1));
        assert!(doubles_per_atom("c1ccc2[nH]ccc2c1").iter().filter(|&&d| d == 0).count() == 1);
    }

    #[test]
    fn non_aromatic_unchanged() {
        let g = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(kekulize(&g).unwrap(), g);
    }

    #[test]
    fn impossible_assignment_fails() {
        // pyrrole written without the ring hydrogen
        assert!(kekulize(&parse_smiles("c1ccnc1").unwrap()).is_err());
        assert!(kekulize(&parse_smiles("c1cccc1").unwrap()).is_err());
    }
}
