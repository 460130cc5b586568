use super::MolGraph;

/// Flags each bond that lies on a cycle. A bond is a ring bond exactly when
/// it is not a bridge, so this is a bridge search (iterative Tarjan lowlink).
pub fn ring_bonds(g: &MolGraph) -> Vec<bool> {
    let n = g.atom_count();
    let mut in_ring = vec![true; g.bond_count()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut clock = 0;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, bond used to enter it, next neighbor slot)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = clock;
        low[root] = clock;
        clock += 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (atom, via, slot) = stack[top];
            if let Some(&(nb, bond)) = g.neighbors(atom).get(slot) {
                stack[top].2 += 1;
                if Some(bond) == via {
                    continue;
                }
                if disc[nb] == usize::MAX {
                    disc[nb] = clock;
                    low[nb] = clock;
                    clock += 1;
                    stack.push((nb, Some(bond), 0));
                } else {
                    low[atom] = low[atom].min(disc[nb]);
                }
            } else {
                stack.pop();
                if let (Some(bond), Some(&(parent, _, _))) = (via, stack.last()) {
                    low[parent] = low[parent].min(low[atom]);
                    if low[atom] > disc[parent] {
                        in_ring[bond] = false;
                    }
                }
            }
        }
    }
    in_ring
}

/// Atoms touching at least one ring bond.
pub(crate) fn ring_atoms(g: &MolGraph) -> Vec<bool> {
    let mut atoms = vec![false; g.atom_count()];
    for (bond, ring) in g.bonds().iter().zip(ring_bonds(g)) {
        if ring {
            atoms[bond.begin] = true;
            atoms[bond.end] = true;
        }
    }
    atoms
}
