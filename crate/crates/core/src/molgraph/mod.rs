//! Molecular graphs parsed from SMILES.
//!
//! The parser accepts the subset of SMILES found in mainstream compound
//! collections: organic-subset atoms (aromatic forms included), bracket atoms
//! with isotope, chirality, hydrogen count and charge, the bond symbols
//! `- = # :` (plus `/` and `\`, read as single bonds), branches and ring
//! closures `1`-`9` / `%nn`. Dot-separated components are rejected.
//!
//! Aromaticity is purely syntactic: a lowercase atom is aromatic and a bond
//! between two aromatic atoms is aromatic unless written otherwise. Implicit
//! hydrogens are never materialized as atoms.
//!
//! On top of the graph live the Bemis–Murcko scaffold ([`murcko_scaffold`]),
//! a canonical string form ([`canonical_smiles`], [`scaffold_key`]) and a
//! hashed circular fingerprint ([`morgan_fingerprint`]).

mod canon;
mod element;
mod fingerprint;
mod kekulize;
mod parse;
mod rings;
mod scaffold;
mod write;

use std::fmt;

pub use canon::{canonical_ranks, canonical_smiles, scaffold_key};
pub use element::Element;
pub use fingerprint::{morgan_fingerprint, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH};
pub use kekulize::{kekulize, KekulizeError};
pub use parse::{parse_smiles, SmilesError};
pub use rings::ring_bonds;
pub use scaffold::murcko_scaffold;
pub use write::{write_smiles, WriteOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer code used in invariants and canonical labels.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    /// Contribution to an atom's valence; aromatic bonds count one and a half.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }

    pub fn from_multiplicity(n: u8) -> Option<BondOrder> {
        match n {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    /// Integer bond multiplicity; `None` for aromatic bonds.
    pub fn multiplicity(self) -> Option<u8> {
        match self {
            BondOrder::Single => Some(1),
            BondOrder::Double => Some(2),
            BondOrder::Triple => Some(3),
            BondOrder::Aromatic => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_hydrogens: Option<u8>,
    pub isotope: Option<u16>,
    /// Chirality text such as `@@`, kept verbatim and never interpreted.
    pub chirality: Option<String>,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            aromatic: false,
            charge: 0,
            explicit_hydrogens: None,
            isotope: None,
            chirality: None,
        }
    }

    pub fn aromatic(element: Element) -> Atom {
        Atom {
            aromatic: true,
            ..Atom::new(element)
        }
    }

    pub fn with_charge(mut self, charge: i8) -> Atom {
        self.charge = charge;
        self
    }

    pub fn with_hydrogens(mut self, h: u8) -> Atom {
        self.explicit_hydrogens = Some(h);
        self
    }

    /// Whether the atom needs bracket syntax when written out.
    pub fn needs_brackets(&self) -> bool {
        !self.element.is_organic_subset()
            || self.charge != 0
            || self.explicit_hydrogens.is_some()
            || self.isotope.is_some()
            || self.chirality.is_some()
            || (self.aromatic && !self.element.can_be_aromatic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
    #[error("bond endpoints must be distinct (atom {0})")]
    SelfBond(usize),
    #[error("atoms {0} and {1} are already bonded")]
    DuplicateBond(usize, usize),
}

/// Atoms and bonds of one molecule, with an adjacency index kept in sync.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new() -> MolGraph {
        MolGraph::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn atom_mut(&mut self, idx: usize) -> &mut Atom {
        &mut self.atoms[idx]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, begin: usize, end: usize, order: BondOrder) -> Result<usize, GraphError> {
        let n = self.atoms.len();
        for idx in [begin, end] {
            if idx >= n {
                return Err(GraphError::AtomOutOfRange(idx));
            }
        }
        if begin == end {
            return Err(GraphError::SelfBond(begin));
        }
        if self.bond_between(begin, end).is_some() {
            return Err(GraphError::DuplicateBond(begin, end));
        }
        let bond_idx = self.bonds.len();
        self.bonds.push(Bond { begin, end, order });
        self.adjacency[begin].push((end, bond_idx));
        self.adjacency[end].push((begin, bond_idx));
        Ok(bond_idx)
    }

    /// Changes the order of an existing bond.
    pub fn set_bond_order(&mut self, bond_idx: usize, order: BondOrder) {
        self.bonds[bond_idx].order = order;
    }

    /// `(neighbor, bond index)` pairs in insertion order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|(nb, _)| *nb == b)
            .map(|&(_, bond)| bond)
    }

    /// Sum of bond valences at an atom (aromatic bonds count 1.5).
    pub fn bond_valence(&self, atom: usize) -> f64 {
        self.adjacency[atom]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    /// Hydrogens implied by the SMILES valence model. Bracket atoms carry
    /// their count explicitly; organic-subset atoms fill up to the lowest
    /// normal valence that accommodates their bonds.
    pub fn implicit_hydrogens(&self, atom: usize) -> u8 {
        let a = &self.atoms[atom];
        if let Some(h) = a.explicit_hydrogens {
            return h;
        }
        if a.needs_brackets() {
            return 0;
        }
        let mut used: u32 = self.adjacency[atom]
            .iter()
            .map(|&(_, b)| match self.bonds[b].order {
                BondOrder::Aromatic => 1,
                o => o.multiplicity().unwrap_or(1) as u32,
            })
            .sum();
        if a.aromatic {
            used += 1;
        }
        let valences: &[u32] = match a.element.atomic_number() {
            5 => &[3],
            6 => &[4],
            7 | 15 => &[3, 5],
            8 => &[2],
            16 => &[2, 4, 6],
            _ => &[1],
        };
        valences
            .iter()
            .find(|&&v| v >= used)
            .map(|&v| (v - used) as u8)
            .unwrap_or(0)
    }

    /// Whether every atom is reachable from atom 0. The empty graph counts as
    /// connected.
    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &(nb, _) in &self.adjacency[a] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Builds the subgraph induced by `keep`, preserving relative atom and bond
    /// order.
    pub fn induced_subgraph(&self, keep: &[bool]) -> MolGraph {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        let mut out = MolGraph::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if keep[i] {
                remap[i] = out.add_atom(atom.clone());
            }
        }
        for bond in &self.bonds {
            if keep[bond.begin] && keep[bond.end] {
                out.add_bond(remap[bond.begin], remap[bond.end], bond.order)
                    .expect("subgraph of a valid graph is valid");
            }
        }
        out
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_smiles(self, &WriteOptions::default()))
    }
}
