use super::{index_value, parse_symbol, AtomKind, SelfiesError, SelfiesString, Symbol};
use crate::molgraph::{Atom, BondOrder, MolGraph};

struct Decoder<'a> {
    tokens: &'a [String],
    symbols: Vec<Symbol>,
    pos: usize,
    atoms: Vec<AtomKind>,
    bonds: Vec<(usize, usize, u8)>,
    rings: Vec<(usize, usize, u8)>,
}

impl Decoder<'_> {
    fn next(&mut self) -> Option<usize> {
        (self.pos < self.symbols.len()).then(|| {
            self.pos += 1;
            self.pos - 1
        })
    }

    fn read_index(&mut self, digits: usize) -> usize {
        (0..digits).fold(0, |acc, _| {
            let tok = self.next().map(|i| self.tokens[i].as_str());
            acc * 16 + index_value(tok)
        })
    }

    /// Derives atoms until the current chain runs out of valence or
    /// `max_derive` tokens have been read, then discards whatever remains of
    /// that budget. `state` is the free valence of `root`; zero means no atom
    /// exists yet. Returns the number of tokens read.
    fn derive(&mut self, max_derive: usize, init_state: u8, root: Option<usize>) -> usize {
        let mut derived = 0;
        let mut state = Some(init_state);
        let mut prev = root;
        while let Some(s) = state {
            if derived >= max_derive {
                break;
            }
            let Some(i) = self.next() else { break };
            derived += 1;
            state = match self.symbols[i] {
                Symbol::Branch { order, digits } => {
                    if s <= 1 {
                        Some(s)
                    } else {
                        let branch_state = (s - 1).min(order);
                        let q = self.read_index(digits);
                        derived += digits + self.derive(q + 1, branch_state, prev);
                        Some(s - branch_state)
                    }
                }
                Symbol::Ring { order, digits } => {
                    if s == 0 {
                        Some(s)
                    } else {
                        let ring_order = order.min(s);
                        let q = self.read_index(digits);
                        derived += digits;
                        let here = prev.expect("positive state implies an atom");
                        self.rings.push((here.saturating_sub(q + 1), here, ring_order));
                        Some(s - ring_order).filter(|&left| left > 0)
                    }
                }
                Symbol::Atom { order, kind } => {
                    let bond = if s == 0 { 0 } else { order.min(s).min(kind.capacity) };
                    let idx = self.atoms.len();
                    self.atoms.push(kind);
                    if bond > 0 {
                        self.bonds.push((prev.expect("positive state implies an atom"), idx, bond));
                    }
                    prev = Some(idx);
                    Some(kind.capacity - bond).filter(|&left| left > 0)
                }
            };
        }
        while derived < max_derive && self.next().is_some() {
            derived += 1;
        }
        derived
    }
}

/// Decodes any sequence of alphabet tokens into a molecule. Bond orders are
/// lowered wherever an atom would exceed its capacity, branch and ring
/// lengths are clipped to what is available, and derivation stops once the
/// main chain has no free valence; trailing tokens are then ignored.
/// Charged atoms carry the hydrogens that fill their capacity.
///
/// ```
/// use chemberta_core::selfies::decode_selfies;
/// let g = decode_selfies(&"[O][#C]".parse().unwrap()).unwrap();
/// assert_eq!(g.to_string(), "O=C");
/// ```
pub fn decode_selfies(s: &SelfiesString) -> Result<MolGraph, SelfiesError> {
    let symbols = s
        .tokens()
        .iter()
        .enumerate()
        .map(|(pos, t)| {
            parse_symbol(t).ok_or_else(|| SelfiesError::UnknownToken {
                pos,
                token: t.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut d = Decoder {
        tokens: s.tokens(),
        symbols,
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        rings: Vec::new(),
    };
    d.derive(usize::MAX, 0, None);

    let mut used: Vec<u8> = vec![0; d.atoms.len()];
    let mut order: Vec<Vec<(usize, usize)>> = vec![Vec::new(); d.atoms.len()];
    let mut edges: Vec<(usize, usize, u8)> = Vec::new();
    for &(a, b, o) in &d.bonds {
        used[a] += o;
        used[b] += o;
        order[a].push((b, edges.len()));
        order[b].push((a, edges.len()));
        edges.push((a, b, o));
    }
    for &(a, b, o) in &d.rings {
        if a == b {
            continue;
        }
        let free_a = d.atoms[a].capacity.saturating_sub(used[a]);
        let free_b = d.atoms[b].capacity.saturating_sub(used[b]);
        if free_a == 0 || free_b == 0 {
            continue;
        }
        let o = o.min(free_a).min(free_b);
        if let Some(&(_, e)) = order[a].iter().find(|&&(nb, _)| nb == b) {
            let new = (edges[e].2 + o).min(3);
            let delta = new - edges[e].2;
            edges[e].2 = new;
            used[a] += delta;
            used[b] += delta;
        } else {
            used[a] += o;
            used[b] += o;
            order[a].push((b, edges.len()));
            order[b].push((a, edges.len()));
            edges.push((a, b, o));
        }
    }

    let mut g = MolGraph::new();
    for (i, kind) in d.atoms.iter().enumerate() {
        let mut atom = Atom::new(kind.element).with_charge(kind.charge);
        if kind.charge != 0 {
            atom = atom.with_hydrogens(kind.capacity - used[i]);
        }
        g.add_atom(atom);
    }
    for &(a, b, o) in &edges {
        g.add_bond(a, b, BondOrder::from_multiplicity(o).expect("orders stay in 1..=3"))
            .expect("decoder never repeats a bond");
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfies::satisfies_valence;

    fn dec(s: &str) -> String {
        let g = decode_selfies(&s.parse().unwrap()).unwrap();
        assert!(satisfies_valence(&g), "{s}");
        g.to_string()
    }

    #[test]
    fn linear_chains() {
        assert_eq!(dec("[C][C][O]"), "CCO");
        assert_eq!(dec("[C][=O]"), "C=O");
        assert_eq!(dec(""), "");
    }

    #[test]
    fn bond_demotion() {
        assert_eq!(dec("[O][#C]"), "O=C");
        assert_eq!(dec("[F][=C]"), "FC");
    }

    #[test]
    fn derivation_stops_without_valence() {
        assert_eq!(dec("[C][F][C]"), "CF");
        assert_eq!(dec("[C][O-1][C]"), "C[O-]");
    }

    #[test]
    fn branches() {
        assert_eq!(dec("[C][C][=Branch1][C][=O][O]"), "CC(=O)O");
        // ignored branch consumes only its own token
        assert_eq!(dec("[F][Branch1][C][F][C]"), "FCF");
        assert_eq!(dec("[Branch1][C][C][O]"), "CCO");
        // body is Q+1 tokens; leftovers after the body halts are dropped
        assert_eq!(dec("[C][Branch1][Ring1][F][C][C][N]"), "C(F)CN");
        assert_eq!(dec("[C][Branch2][C][C][C][O]"), "C(C)O");
    }

    #[test]
    fn rings() {
        assert_eq!(dec("[C][C][C][Ring1][Ring1]"), "C1CC1");
        assert_eq!(dec("[C][=C][C][=C][C][=C][Ring1][=Branch1]"), "C1=CC=CC=C1");
        // missing index digit reads as zero; ring onto an existing bond raises its order
        assert_eq!(dec("[C][C][Ring1]"), "C=C");
        assert_eq!(dec("[C][C][C][=Ring1][Ring1]"), "C=1CC1");
        // self-loop target is skipped
        assert_eq!(dec("[C][Ring1][C]"), "C");
    }

    #[test]
    fn charged_atoms_carry_hydrogens() {
        assert_eq!(dec("[N+1]"), "[NH4+]");
        assert_eq!(dec("[C][N+1][=Branch1][C][=O][O-1]"), "C[N+](=O)[O-]");
    }

    #[test]
    fn unknown_token_is_the_only_error() {
        let err = decode_selfies(&"[C][Xe]".parse().unwrap()).unwrap_err();
        assert_eq!(
            err,
            SelfiesError::UnknownToken {
                pos: 1,
                token: "[Xe]".into()
            }
        );
    }
}
