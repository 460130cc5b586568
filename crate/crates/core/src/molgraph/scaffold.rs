use super::rings::ring_atoms;
use super::MolGraph;

/// Bemis–Murcko scaffold: ring systems plus the acyclic linkers between
/// them. Non-ring atoms of degree one are deleted repeatedly until none
/// remain; a molecule without rings yields the empty graph.
///
/// ```
/// use chemberta_core::molgraph::{murcko_scaffold, parse_smiles};
/// let scaffold = murcko_scaffold(&parse_smiles("c1ccccc1CCO").unwrap());
/// assert_eq!(scaffold, parse_smiles("c1ccccc1").unwrap());
/// ```
pub fn murcko_scaffold(g: &MolGraph) -> MolGraph {
    let in_ring = ring_atoms(g);
    if !in_ring.iter().any(|&r| r) {
        return MolGraph::new();
    }
    let n = g.atom_count();
    let mut keep = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| !in_ring[i] && degree[i] <= 1).collect();
    while let Some(atom) = queue.pop() {
        if !keep[atom] {
            continue;
        }
        keep[atom] = false;
        for &(nb, _) in g.neighbors(atom) {
            if keep[nb] {
                degree[nb] -= 1;
                if !in_ring[nb] && degree[nb] <= 1 {
                    queue.push(nb);
                }
            }
        }
    }
    g.induced_subgraph(&keep)
}
