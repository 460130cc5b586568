use std::fmt::Write as _;

use super::{Atom, BondOrder, MolGraph};

#[derive(Debug, Clone)]
pub struct WriteOptions {
    /// Emit stored chirality text. The tag is copied as written and is not
    /// adjusted for the new neighbor order.
    pub chirality: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions { chirality: true }
    }
}

/// Writes SMILES with a depth-first walk in input atom order.
pub fn write_smiles(g: &MolGraph, opts: &WriteOptions) -> String {
    let ranks: Vec<usize> = (0..g.atom_count()).collect();
    write_ranked(g, &ranks, opts)
}

/// Writes SMILES starting each component at its lowest-ranked atom and
/// visiting neighbors in rank order. Identical ranks on isomorphic graphs
/// give identical strings.
pub(crate) fn write_ranked(g: &MolGraph, ranks: &[usize], opts: &WriteOptions) -> String {
    let n = g.atom_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| ranks[i]);

    let mut sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|a| {
            let mut v = g.neighbors(a).to_vec();
            v.sort_by_key(|&(nb, _)| ranks[nb]);
            v
        })
        .collect();

    // First pass: spanning forest and ring-closure bonds.
    let mut disc = vec![usize::MAX; n];
    let mut parent_bond = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ring_events: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut clock = 0;
    for &root in &order {
        if disc[root] != usize::MAX {
            continue;
        }
        roots.push(root);
        disc[root] = clock;
        clock += 1;
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.len().checked_sub(1) {
            let (atom, slot) = stack[top];
            let Some(&(nb, bond)) = sorted_nbrs[atom].get(slot) else {
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
                children[atom].push((nb, bond));
                stack.push((nb, 0));
            } else if disc[nb] < disc[atom] {
                // back edge: nb opens, atom closes
                ring_events[nb].push((atom, bond));
                ring_events[atom].push((nb, bond));
            }
        }
    }
    for events in ring_events.iter_mut() {
        events.sort_by_key(|&(partner, _)| disc[partner]);
    }
    sorted_nbrs.clear();

    // Second pass: emit text.
    let mut out = String::new();
    let mut labels: Vec<Option<usize>> = vec![None; g.bond_count()];
    let mut in_use: Vec<bool> = Vec::new();
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        // (atom, bond from parent, phase) where phase 0 emits, 1.. handle children
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        while let Some(top) = stack.len().checked_sub(1) {
            let (atom, via, phase) = stack[top];
            let kids = &children[atom];
            if phase == 0 {
                if let Some(b) = via {
                    push_bond(&mut out, g, b);
                }
                push_atom(&mut out, g.atom(atom), opts);
                for &(partner, bond) in &ring_events[atom] {
                    if disc[partner] < disc[atom] {
                        let label = labels[bond].take().expect("ring opened before closing");
                        in_use[label] = false;
                        push_label(&mut out, label);
                    } else {
                        let label = match in_use.iter().skip(1).position(|u| !u) {
                            Some(i) => i + 1,
                            None => {
                                if in_use.is_empty() {
                                    in_use.push(true);
                                }
                                in_use.push(false);
                                in_use.len() - 1
                            }
                        };
                        in_use[label] = true;
                        labels[bond] = Some(label);
                        push_bond(&mut out, g, bond);
                        push_label(&mut out, label);
                    }
                }
            } else if phase < kids.len() {
                // the child just finished was written as a branch
                out.push(')');
            }
            if phase < kids.len() {
                stack[top].2 += 1;
                let (child, bond) = kids[phase];
                if phase + 1 < kids.len() {
                    out.push('(');
                }
                stack.push((child, Some(bond), 0));
            } else {
                stack.pop();
            }
        }
    }
    out
}

fn push_label(out: &mut String, label: usize) {
    assert!(label < 100, "more than 99 simultaneously open rings");
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label}");
    }
}

fn push_bond(out: &mut String, g: &MolGraph, bond: usize) {
    let b = &g.bonds()[bond];
    let both_aromatic = g.atom(b.begin).aromatic && g.atom(b.end).aromatic;
    let sym = match (b.order, both_aromatic) {
        (BondOrder::Single, false) | (BondOrder::Aromatic, true) => "",
        (BondOrder::Single, true) => "-",
        (BondOrder::Double, _) => "=",
        (BondOrder::Triple, _) => "#",
        (BondOrder::Aromatic, false) => ":",
    };
    out.push_str(sym);
}

fn push_atom(out: &mut String, atom: &Atom, opts: &WriteOptions) {
    let symbol = atom.element.symbol();
    let chiral = opts.chirality && atom.chirality.is_some();
    let plain = atom.element.is_organic_subset()
        && atom.charge == 0
        && atom.isotope.is_none()
        && !chiral
        && atom.explicit_hydrogens.is_none()
        && (!atom.aromatic || atom.element.can_be_aromatic());
    if plain {
        push_symbol(out, symbol, atom.aromatic);
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    push_symbol(out, symbol, atom.aromatic);
    if chiral {
        out.push_str(atom.chirality.as_deref().unwrap_or_default());
    }
    match atom.explicit_hydrogens {
        Some(0) | None => {}
        Some(1) => out.push('H'),
        Some(h) => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -(c as i32));
        }
    }
    out.push(']');
}

fn push_symbol(out: &mut String, symbol: &str, aromatic: bool) {
    if aromatic {
        out.push_str(&symbol.to_ascii_lowercase());
    } else {
        out.push_str(symbol);
    }
}
