//! Seeded generator of drug-like molecules and labelled toy tasks.
//!
//! Molecules are grown by bonding fragments onto atoms that still carry an
//! implicit hydrogen, so every output parses and respects valence. The
//! fragment set covers aromatic and aliphatic rings, fused systems, halogens,
//! charged groups and occasional stereo tags.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{TaskDataset, TaskRecord};
use crate::molgraph::{canonical_smiles, parse_smiles, write_smiles, BondOrder, Element, MolGraph, WriteOptions};

const CORES: &[&str] = &[
    "c1ccccc1",
    "c1ccccc1",
    "c1ccncc1",
    "c1cncnc1",
    "c1ccc2ccccc2c1",
    "c1ccc2[nH]ccc2c1",
    "c1ccsc1",
    "c1ccoc1",
    "c1cnc[nH]1",
    "C1CCCCC1",
    "C1CCNCC1",
    "C1CCOCC1",
    "C1COCCN1",
    "C1CCNC1",
    "C1CC1",
    "C1CCC(=O)N1",
    "CCCC",
    "CC(C)C",
];

const PIECES: &[&str] = &[
    "F",
    "Cl",
    "Br",
    "I",
    "O",
    "N",
    "C",
    "CC",
    "CCC",
    "OC",
    "OCC",
    "SC",
    "C#N",
    "C=O",
    "C=C",
    "C#C",
    "C(F)(F)F",
    "C(=O)O",
    "C(=O)OC",
    "C(=O)N",
    "C(=O)C",
    "NC(=O)C",
    "N(C)C",
    "S(=O)(=O)N",
    "S(=O)(=O)C",
    "[N+](=O)[O-]",
    "C(=O)[O-]",
    "[NH3+]",
    "CO",
    "CCN",
    "OCCO",
    "c1ccccc1",
    "c1ccncc1",
    "c1ccsc1",
    "C1CCCCC1",
    "C1CCNCC1",
    "C1CC1",
    "C1CCOC1",
];

fn fragment(smiles: &str) -> MolGraph {
    parse_smiles(smiles).expect("fragment SMILES are valid")
}

/// Atoms that can take one more single bond without changing their
/// written form.
fn open_sites(g: &MolGraph) -> Vec<usize> {
    (0..g.atom_count())
        .filter(|&i| {
            let a = g.atom(i);
            !a.needs_brackets()
                && matches!(a.element, Element::C | Element::N | Element::O)
                && g.implicit_hydrogens(i) >= 1
        })
        .collect()
}

fn attach(g: &mut MolGraph, host: usize, frag: &MolGraph) {
    let base = g.atom_count();
    for a in frag.atoms() {
        g.add_atom(a.clone());
    }
    for b in frag.bonds() {
        g.add_bond(base + b.begin, base + b.end, b.order).expect("fresh atoms");
    }
    g.add_bond(host, base, BondOrder::Single).expect("fresh bond");
}

/// Stream of random molecules, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct MoleculeGenerator {
    rng: ChaCha8Rng,
}

impl MoleculeGenerator {
    pub fn new(seed: u64) -> MoleculeGenerator {
        MoleculeGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_graph(&mut self) -> MolGraph {
        let rng = &mut self.rng;
        let mut g = fragment(CORES.choose(rng).expect("non-empty"));
        let pieces = rng.random_range(1..=6);
        for _ in 0..pieces {
            let sites = open_sites(&g);
            let Some(&host) = sites.choose(rng) else { break };
            let frag = fragment(PIECES.choose(rng).expect("non-empty"));
            attach(&mut g, host, &frag);
        }
        if rng.random_bool(0.15) {
            let stereo: Vec<usize> = (0..g.atom_count())
                .filter(|&i| {
                    let a = g.atom(i);
                    a.element == Element::C
                        && !a.aromatic
                        && !a.needs_brackets()
                        && g.degree(i) == 3
                        && g.implicit_hydrogens(i) == 1
                })
                .collect();
            if let Some(&i) = stereo.choose(rng) {
                let tag = if rng.random_bool(0.5) { "@" } else { "@@" };
                let a = g.atom_mut(i);
                a.explicit_hydrogens = Some(1);
                a.chirality = Some(tag.into());
            }
        }
        g
    }

    pub fn next_smiles(&mut self) -> String {
        write_smiles(&self.next_graph(), &WriteOptions::default())
    }
}

/// `n` generated SMILES strings (duplicates possible).
///
/// ```
/// use chemberta_core::molgraph::parse_smiles;
/// use chemberta_core::synth::generate_corpus;
/// let lines = generate_corpus(50, 7);
/// assert_eq!(lines, generate_corpus(50, 7));
/// assert!(lines.iter().all(|s| parse_smiles(s).is_ok()));
/// ```
pub fn generate_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut g = MoleculeGenerator::new(seed);
    (0..n).map(|_| g.next_smiles()).collect()
}

/// Labelling rules for generated classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    /// Positive when any nitrogen atom is present.
    ContainsNitrogen,
    /// Positive when a neutral carboxylic acid group is present. Esters,
    /// amides and carboxylates are negative, so the label depends on
    /// context around each carbonyl rather than on single tokens.
    CarboxylicAcid,
}

impl SyntheticTask {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticTask::ContainsNitrogen => "contains_nitrogen",
            SyntheticTask::CarboxylicAcid => "carboxylic_acid",
        }
    }

    pub fn label(self, g: &MolGraph) -> bool {
        match self {
            SyntheticTask::ContainsNitrogen => g.atoms().iter().any(|a| a.element == Element::N),
            SyntheticTask::CarboxylicAcid => (0..g.atom_count()).any(|c| is_acid_carbon(g, c)),
        }
    }
}

fn is_acid_carbon(g: &MolGraph, c: usize) -> bool {
    if g.atom(c).element != Element::C || g.atom(c).aromatic {
        return false;
    }
    let mut carbonyl = false;
    let mut hydroxyl = false;
    for &(nb, b) in g.neighbors(c) {
        let a = g.atom(nb);
        if a.element != Element::O || a.charge != 0 || g.degree(nb) != 1 {
            continue;
        }
        match g.bonds()[b].order {
            BondOrder::Double => carbonyl = true,
            BondOrder::Single if g.implicit_hydrogens(nb) == 1 => hydroxyl = true,
            _ => {}
        }
    }
    carbonyl && hydroxyl
}

/// A task of `n` distinct generated molecules, half positive (rounded up),
/// in generation order.
///
/// ```
/// use chemberta_core::synth::{synthetic_task, SyntheticTask};
/// let t = synthetic_task(SyntheticTask::ContainsNitrogen, 20, 1);
/// assert_eq!(t.records.iter().filter(|r| r.label).count(), 10);
/// ```
pub fn synthetic_task(kind: SyntheticTask, n: usize, seed: u64) -> TaskDataset {
    let mut generator = MoleculeGenerator::new(seed);
    let want_pos = n.div_ceil(2);
    let want_neg = n - want_pos;
    let (mut pos, mut neg) = (0, 0);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(n);
    while pos + neg < n {
        let g = generator.next_graph();
        let label = kind.label(&g);
        if (label && pos == want_pos) || (!label && neg == want_neg) {
            continue;
        }
        if !seen.insert(canonical_smiles(&g)) {
            continue;
        }
        if label {
            pos += 1;
        } else {
            neg += 1;
        }
        records.push(TaskRecord {
            smiles: write_smiles(&g, &WriteOptions::default()),
            label,
        });
    }
    TaskDataset {
        task_name: kind.name().into(),
        records,
    }
}
