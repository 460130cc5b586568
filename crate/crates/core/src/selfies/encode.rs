use super::{atom_token, bond_capacity, branch_token, ring_token, SelfiesError, SelfiesString, INDEX_ALPHABET};
use crate::molgraph::{kekulize, parse_smiles, BondOrder, MolGraph};

/// Depth-first spanning tree in derivation order.
struct Tree {
    /// Preorder position of each atom; equals its index after decoding.
    disc: Vec<usize>,
    /// Tree children as (atom, bond order); the last one continues the chain.
    children: Vec<Vec<(usize, u8)>>,
    /// Ring bonds closed at each atom: (earlier atom, bond order).
    closures: Vec<Vec<(usize, u8)>>,
}

fn spanning_tree(g: &MolGraph, orders: &[u8]) -> Tree {
    let n = g.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut parent_bond = vec![usize::MAX; n];
    let mut children = vec![Vec::new(); n];
    let mut closures = vec![Vec::new(); n];
    let nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|a| {
            let mut v = g.neighbors(a).to_vec();
            v.sort_unstable();
            v
        })
        .collect();
    let mut clock = 0;
    disc[0] = clock;
    clock += 1;
    let mut stack = vec![(0usize, 0usize)];
    while let Some(top) = stack.len().checked_sub(1) {
        let (atom, slot) = stack[top];
        let Some(&(nb, bond)) = nbrs[atom].get(slot) else {
            stack.pop();
            continue;
        };
        stack[top].1 += 1;
        if bond == parent_bond[atom] {
            continue;
        }
        if disc[nb] == usize::MAX {
            disc[nb] = clock;
            clock += 1;
            parent_bond[nb] = bond;
            children[atom].push((nb, orders[bond]));
            stack.push((nb, 0));
        } else if disc[nb] < disc[atom] {
            closures[atom].push((nb, orders[bond]));
        }
    }
    Tree {
        disc,
        children,
        closures,
    }
}

/// Base-16 digits of `q` using exactly `digits` index tokens.
fn index_tokens(q: usize, digits: usize) -> impl Iterator<Item = String> {
    (0..digits)
        .rev()
        .map(move |d| INDEX_ALPHABET[(q >> (4 * d)) & 15].to_owned())
}

fn digits_for(q: usize, what: &str) -> Result<usize, SelfiesError> {
    match q {
        0..16 => Ok(1),
        16..256 => Ok(2),
        _ => Err(SelfiesError::UnsupportedFeature(format!("{what} spanning {} tokens", q + 1))),
    }
}

struct Emitter<'a> {
    g: &'a MolGraph,
    tree: Tree,
}

impl Emitter<'_> {
    fn emit(&self, mut atom: usize, mut via: u8, out: &mut Vec<String>) -> Result<(), SelfiesError> {
        loop {
            let a = self.g.atom(atom);
            out.push(atom_token(via, a.element, a.charge));
            for &(earlier, order) in &self.tree.closures[atom] {
                let q = self.tree.disc[atom] - self.tree.disc[earlier] - 1;
                let digits = digits_for(q, "ring bond")?;
                out.push(ring_token(order, digits));
                out.extend(index_tokens(q, digits));
            }
            let kids = &self.tree.children[atom];
            let Some((&(next, next_order), branches)) = kids.split_last() else {
                return Ok(());
            };
            for &(child, order) in branches {
                let mut body = Vec::new();
                self.emit(child, order, &mut body)?;
                let q = body.len() - 1;
                let digits = digits_for(q, "branch")?;
                out.push(branch_token(order, digits));
                out.extend(index_tokens(q, digits));
                out.append(&mut body);
            }
            atom = next;
            via = next_order;
        }
    }
}

/// Encodes a connected, kekulized graph. Every atom kind must be in the
/// valence table and within its capacity; hydrogens, isotopes and chirality
/// are not represented.
///
/// ```
/// use chemberta_core::molgraph::parse_smiles;
/// use chemberta_core::selfies::encode_selfies;
/// let s = encode_selfies(&parse_smiles("C1CC1").unwrap()).unwrap();
/// assert_eq!(s.to_string(), "[C][C][C][Ring1][Ring1]");
/// ```
pub fn encode_selfies(g: &MolGraph) -> Result<SelfiesString, SelfiesError> {
    if g.is_empty() {
        return Ok(SelfiesString::default());
    }
    if !g.is_connected() {
        return Err(SelfiesError::UnsupportedFeature("disconnected graph".into()));
    }
    let mut orders = Vec::with_capacity(g.bond_count());
    for bond in g.bonds() {
        let m = bond.order.multiplicity().ok_or_else(|| {
            SelfiesError::UnsupportedFeature("aromatic bond; kekulize before encoding".into())
        })?;
        orders.push(m);
    }
    for i in 0..g.atom_count() {
        let a = g.atom(i);
        if a.aromatic {
            return Err(SelfiesError::UnsupportedFeature(format!(
                "aromatic atom {i}; kekulize before encoding"
            )));
        }
        let cap = bond_capacity(a.element, a.charge).ok_or_else(|| {
            SelfiesError::UnsupportedFeature(format!("atom {} with charge {}", a.element, a.charge))
        })?;
        let used: u32 = g.neighbors(i).iter().map(|&(_, b)| orders[b] as u32).sum();
        if used > cap as u32 {
            return Err(SelfiesError::UnsupportedFeature(format!(
                "atom {i} ({}) has bond order {used} over capacity {cap}",
                a.element
            )));
        }
    }
    let emitter = Emitter {
        g,
        tree: spanning_tree(g, &orders),
    };
    let mut out = Vec::new();
    emitter.emit(0, 0, &mut out)?;
    Ok(SelfiesString::new(out))
}

/// Parses, kekulizes and encodes one SMILES string.
pub fn smiles_to_selfies(smiles: &str) -> Result<SelfiesString, SelfiesError> {
    let g = parse_smiles(smiles)?;
    let g = if g.atoms().iter().any(|a| a.aromatic) || g.bonds().iter().any(|b| b.order == BondOrder::Aromatic) {
        kekulize(&g)?
    } else {
        g
    };
    encode_selfies(&g)
}
