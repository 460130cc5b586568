use std::collections::BTreeMap;

use super::{Atom, BondOrder, Element, GraphError, MolGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("non-ASCII byte at position {pos}")]
    NonAscii { pos: usize },
    #[error("unknown symbol {symbol:?} at position {pos}")]
    UnknownSymbol { pos: usize, symbol: String },
    #[error("ring bond {label} is never closed")]
    UnmatchedRingBond { label: u16 },
    #[error("ring bond {label} has conflicting bond orders")]
    ConflictingRingBond { label: u16 },
    #[error("unbalanced branch at position {pos}")]
    UnbalancedBranch { pos: usize },
    #[error("unclosed bracket atom starting at position {pos}")]
    UnclosedBracket { pos: usize },
    #[error("bond symbol at position {pos} is not followed by an atom")]
    DanglingBond { pos: usize },
    #[error("disconnected components ('.') are not supported (position {pos})")]
    DisconnectedComponents { pos: usize },
    #[error("atoms {0} and {1} are bonded twice")]
    DuplicateBond(usize, usize),
}

impl From<GraphError> for SmilesError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::DuplicateBond(a, b) => SmilesError::DuplicateBond(a, b),
            GraphError::SelfBond(a) => SmilesError::DuplicateBond(a, a),
            GraphError::AtomOutOfRange(a) => SmilesError::UnknownSymbol {
                pos: a,
                symbol: String::new(),
            },
        }
    }
}

struct RingOpening {
    atom: usize,
    order: Option<BondOrder>,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    graph: MolGraph,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(usize, usize, usize)>,
    rings: BTreeMap<u16, RingOpening>,
}

/// Parses a single-component SMILES string.
///
/// ```
/// use chemberta_core::molgraph::parse_smiles;
/// let g = parse_smiles("C1CC1").unwrap();
/// assert_eq!((g.atom_count(), g.bond_count()), (3, 3));
/// ```
pub fn parse_smiles(s: &str) -> Result<MolGraph, SmilesError> {
    if s.is_empty() {
        return Err(SmilesError::Empty);
    }
    if let Some(pos) = s.bytes().position(|b| !b.is_ascii()) {
        return Err(SmilesError::NonAscii { pos });
    }
    let mut p = Parser {
        bytes: s.as_bytes(),
        pos: 0,
        graph: MolGraph::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    Ok(p.graph)
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn unknown(&self, pos: usize) -> SmilesError {
        SmilesError::UnknownSymbol {
            pos,
            symbol: (self.bytes.get(pos).map(|&b| b as char).unwrap_or('\0')).to_string(),
        }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.attach(atom, start)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = self.organic_atom()?;
                    self.attach(atom, start)?;
                }
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(SmilesError::UnbalancedBranch { pos: start });
                    };
                    if let Some((_, bpos)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos: bpos });
                    }
                    self.branches.push((prev, start, self.graph.atom_count()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _, atoms_before)) = self.branches.pop() else {
                        return Err(SmilesError::UnbalancedBranch { pos: start });
                    };
                    if let Some((_, bpos)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos: bpos });
                    }
                    if self.graph.atom_count() == atoms_before {
                        return Err(SmilesError::UnbalancedBranch { pos: start });
                    }
                    self.prev = Some(anchor);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(self.unknown(start));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, start));
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_bond((c - b'0') as u16, start)?;
                }
                b'%' => {
                    let digits = self.bytes.get(start + 1..start + 3);
                    match digits {
                        Some(d) if d.iter().all(u8::is_ascii_digit) => {
                            let label = ((d[0] - b'0') * 10 + (d[1] - b'0')) as u16;
                            self.pos += 3;
                            self.ring_bond(label, start)?;
                        }
                        _ => return Err(self.unknown(start)),
                    }
                }
                b'.' => return Err(SmilesError::DisconnectedComponents { pos: start }),
                _ => return Err(self.unknown(start)),
            }
        }
        if let Some((_, pos)) = self.pending {
            return Err(SmilesError::DanglingBond { pos });
        }
        if let Some(&(_, pos, _)) = self.branches.last() {
            return Err(SmilesError::UnbalancedBranch { pos });
        }
        if let Some((&label, _)) = self.rings.iter().next() {
            return Err(SmilesError::UnmatchedRingBond { label });
        }
        if self.graph.is_empty() {
            return Err(SmilesError::Empty);
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.graph.atom(a).aromatic && self.graph.atom(b).aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn attach(&mut self, atom: Atom, start: usize) -> Result<(), SmilesError> {
        let idx = self.graph.add_atom(atom);
        match (self.prev, self.pending.take()) {
            (Some(prev), pending) => {
                let order = pending.map(|(o, _)| o).unwrap_or_else(|| self.default_order(prev, idx));
                self.graph.add_bond(prev, idx, order)?;
            }
            (None, Some((_, pos))) => return Err(SmilesError::DanglingBond { pos }),
            (None, None) => {
                if idx != 0 {
                    return Err(self.unknown(start));
                }
            }
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_bond(&mut self, label: u16, start: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return Err(self.unknown(start));
        };
        let written = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, RingOpening { atom: current, order: written });
            }
            Some(open) => {
                let order = match (open.order, written) {
                    (Some(a), Some(b)) if a != b => return Err(SmilesError::ConflictingRingBond { label }),
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(open.atom, current),
                };
                if open.atom == current {
                    return Err(SmilesError::DuplicateBond(current, current));
                }
                self.graph.add_bond(open.atom, current, order)?;
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bytes[start];
        let next = self.bytes.get(start + 1).copied();
        let (atom, len) = match (c, next) {
            (b'C', Some(b'l')) => (Atom::new(Element::CL), 2),
            (b'B', Some(b'r')) => (Atom::new(Element::BR), 2),
            (b'B', _) => (Atom::new(Element::B), 1),
            (b'C', _) => (Atom::new(Element::C), 1),
            (b'N', _) => (Atom::new(Element::N), 1),
            (b'O', _) => (Atom::new(Element::O), 1),
            (b'P', _) => (Atom::new(Element::P), 1),
            (b'S', _) => (Atom::new(Element::S), 1),
            (b'F', _) => (Atom::new(Element::F), 1),
            (b'I', _) => (Atom::new(Element::I), 1),
            (b'b', _) => (Atom::aromatic(Element::B), 1),
            (b'c', _) => (Atom::aromatic(Element::C), 1),
            (b'n', _) => (Atom::aromatic(Element::N), 1),
            (b'o', _) => (Atom::aromatic(Element::O), 1),
            (b'p', _) => (Atom::aromatic(Element::P), 1),
            (b's', _) => (Atom::aromatic(Element::S), 1),
            _ => return Err(self.unknown(start)),
        };
        self.pos += len;
        Ok(atom)
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(d) = self.peek().filter(u8::is_ascii_digit) {
            value = value.saturating_mul(10).saturating_add((d - b'0') as u32);
            self.pos += 1;
        }
        (self.pos > start).then_some(value)
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let Some(close) = self.bytes[open..].iter().position(|&b| b == b']').map(|i| open + i) else {
            return Err(SmilesError::UnclosedBracket { pos: open });
        };
        if self.bytes[open + 1..close].contains(&b'[') {
            return Err(SmilesError::UnclosedBracket { pos: open });
        }
        self.pos = open + 1;

        let isotope = match self.read_number() {
            Some(0) => return Err(self.unknown(open + 1)),
            Some(n) if n > u16::MAX as u32 => return Err(self.unknown(open + 1)),
            other => other.map(|n| n as u16),
        };

        let sym_start = self.pos;
        let first = self.peek().ok_or_else(|| self.unknown(sym_start))?;
        let second = self.bytes.get(self.pos + 1).copied().filter(|_| self.pos + 1 < close);
        let mut atom = if first.is_ascii_uppercase() {
            let two = second
                .filter(u8::is_ascii_lowercase)
                .and_then(|s| Element::from_symbol(std::str::from_utf8(&[first, s]).ok()?));
            if let Some(e) = two {
                self.pos += 2;
                Atom::new(e)
            } else {
                let e = Element::from_symbol(std::str::from_utf8(&[first]).unwrap())
                    .ok_or_else(|| self.unknown(sym_start))?;
                self.pos += 1;
                Atom::new(e)
            }
        } else if first.is_ascii_lowercase() {
            let e = match (first, second) {
                (b's', Some(b'e')) => Some((Element::from_symbol("Se"), 2)),
                (b'a', Some(b's')) => Some((Element::from_symbol("As"), 2)),
                (b'b', _) => Some((Some(Element::B), 1)),
                (b'c', _) => Some((Some(Element::C), 1)),
                (b'n', _) => Some((Some(Element::N), 1)),
                (b'o', _) => Some((Some(Element::O), 1)),
                (b'p', _) => Some((Some(Element::P), 1)),
                (b's', _) => Some((Some(Element::S), 1)),
                _ => None,
            };
            match e {
                Some((Some(e), len)) => {
                    self.pos += len;
                    Atom::aromatic(e)
                }
                _ => return Err(self.unknown(sym_start)),
            }
        } else {
            return Err(self.unknown(sym_start));
        };
        atom.isotope = isotope;

        if self.peek() == Some(b'@') {
            let chi_start = self.pos;
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else if self.pos + 1 < close
                && self.bytes[self.pos].is_ascii_uppercase()
                && self.bytes[self.pos + 1].is_ascii_uppercase()
            {
                self.pos += 2;
                if self.read_number().is_none() {
                    return Err(self.unknown(self.pos));
                }
            }
            atom.chirality = Some(String::from_utf8_lossy(&self.bytes[chi_start..self.pos]).into_owned());
        }

        if self.peek() == Some(b'H') && self.pos < close {
            self.pos += 1;
            let h = self.read_number().unwrap_or(1);
            if h > 9 {
                return Err(self.unknown(self.pos - 1));
            }
            atom.explicit_hydrogens = Some(h as u8);
        } else {
            atom.explicit_hydrogens = Some(0);
        }

        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            let magnitude = if let Some(n) = self.read_number() {
                n as i32
            } else {
                let mut m = 1;
                while self.peek() == Some(sign) {
                    m += 1;
                    self.pos += 1;
                }
                m
            };
            if magnitude > 15 {
                return Err(self.unknown(self.pos - 1));
            }
            atom.charge = (unit * magnitude) as i8;
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.read_number().is_none() {
                return Err(self.unknown(self.pos));
            }
        }

        if self.pos != close {
            return Err(self.unknown(self.pos));
        }
        self.pos = close + 1;
        Ok(atom)
    }
}
