use super::write::{write_ranked, WriteOptions};
use super::MolGraph;

/// Upper bound on leaves visited by the tie-breaking search. Graphs with more
/// symmetry than this still get a deterministic (input-order dependent) form.
const LEAF_BUDGET: usize = 1024;

fn dense_ranks<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn initial_ranks(g: &MolGraph) -> Vec<usize> {
    let keys: Vec<_> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            (
                a.element,
                g.degree(i),
                a.charge,
                a.aromatic,
                a.explicit_hydrogens.unwrap_or(u8::MAX),
                a.isotope.unwrap_or(0),
            )
        })
        .collect();
    dense_ranks(&keys)
}

/// Morgan-style relabeling: each atom's class is refined by the multiset of
/// (bond order, neighbor class) until the number of classes stops growing.
fn refine(g: &MolGraph, ranks: &mut Vec<usize>) {
    let mut classes = count_classes(ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..g.atom_count())
            .map(|i| {
                let mut env: Vec<(usize, u8)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, b)| (ranks[nb], g.bonds()[b].order.code()))
                    .collect();
                env.sort_unstable();
                (ranks[i], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = count_classes(&next);
        *ranks = next;
        if next_classes == classes {
            return;
        }
        classes = next_classes;
    }
}

fn count_classes(ranks: &[usize]) -> usize {
    ranks.iter().max().map_or(0, |m| m + 1)
}

struct Search<'a> {
    g: &'a MolGraph,
    best: Option<(String, Vec<usize>)>,
    leaves: usize,
}

impl Search<'_> {
    fn explore(&mut self, ranks: Vec<usize>) {
        if self.leaves >= LEAF_BUDGET {
            return;
        }
        let n = ranks.len();
        let mut cell_sizes = vec![0usize; n];
        for &r in &ranks {
            cell_sizes[r] += 1;
        }
        let Some(target) = cell_sizes.iter().position(|&c| c > 1) else {
            self.leaves += 1;
            let s = write_ranked(self.g, &ranks, &WriteOptions { chirality: false });
            if self.best.as_ref().is_none_or(|(b, _)| s < *b) {
                self.best = Some((s, ranks));
            }
            return;
        };

        // Atoms with identical neighborhoods are interchangeable by an
        // automorphism, so only one of them needs to be tried.
        let mut seen_envs: Vec<Vec<(usize, u8)>> = Vec::new();
        for cand in (0..n).filter(|&i| ranks[i] == target) {
            let mut env: Vec<(usize, u8)> = self
                .g
                .neighbors(cand)
                .iter()
                .map(|&(nb, b)| (nb, self.g.bonds()[b].order.code()))
                .collect();
            env.sort_unstable();
            if seen_envs.contains(&env) {
                continue;
            }
            seen_envs.push(env);
            let mut next: Vec<usize> = ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| 2 * r + usize::from(r == target && i != cand))
                .collect();
            next = dense_ranks(&next);
            refine(self.g, &mut next);
            self.explore(next);
        }
    }
}

/// Canonical atom ranks (a permutation of `0..n`).
pub fn canonical_ranks(g: &MolGraph) -> Vec<usize> {
    if g.is_empty() {
        return Vec::new();
    }
    let mut ranks = initial_ranks(g);
    refine(g, &mut ranks);
    let mut search = Search { g, best: None, leaves: 0 };
    search.explore(ranks);
    search.best.expect("at least one leaf").1
}

/// SMILES written from canonical ranks, without chirality. Isomorphic graphs
/// (same elements, charges, hydrogen counts, aromatic flags and bond orders)
/// produce the same string.
pub fn canonical_smiles(g: &MolGraph) -> String {
    if g.is_empty() {
        return String::new();
    }
    let ranks = canonical_ranks(g);
    write_ranked(g, &ranks, &WriteOptions { chirality: false })
}

/// Grouping key for scaffold splits; the empty scaffold maps to `""`.
pub fn scaffold_key(scaffold: &MolGraph) -> String {
    canonical_smiles(scaffold)
}
