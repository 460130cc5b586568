//! SELFIES strings: a molecular language in which every token sequence
//! decodes to a molecule that respects atom valences.
//!
//! The alphabet is a reduced one: neutral `B C N O S P F Cl Br I`, the
//! charged forms `N+1 N-1 O+1 O-1`, each with an optional `=`/`#` bond
//! prefix, plus `[Branch1]`, `[Branch2]`, `[Ring1]` and `[Ring2]` with the
//! same prefixes. Branch and ring lengths are written as base-16 numbers
//! using the index tokens in [`INDEX_ALPHABET`].
//!
//! ```
//! use chemberta_core::selfies::{decode_selfies, smiles_to_selfies};
//! let s = smiles_to_selfies("CC(=O)O").unwrap();
//! assert_eq!(s.to_string(), "[C][C][=Branch1][C][=O][O]");
//! assert_eq!(decode_selfies(&s).unwrap().to_string(), "CC(=O)O");
//! ```

mod decode;
mod encode;

use std::fmt;
use std::str::FromStr;

use crate::molgraph::{canonical_smiles, Element, KekulizeError, MolGraph, SmilesError};

pub use decode::decode_selfies;
pub use encode::{encode_selfies, smiles_to_selfies};

/// Digits 0 through 15 of branch and ring length indices.
pub const INDEX_ALPHABET: [&str; 16] = [
    "[C]", "[Ring1]", "[Ring2]", "[Branch1]", "[=Branch1]", "[#Branch1]", "[Branch2]", "[=Branch2]",
    "[#Branch2]", "[O]", "[N]", "[=N]", "[=C]", "[#C]", "[S]", "[P]",
];

/// Maximum total bond order per atom kind: (element, charge, capacity).
pub const VALENCE_TABLE: [(&str, i8, u8); 14] = [
    ("C", 0, 4),
    ("N", 0, 3),
    ("N", 1, 4),
    ("N", -1, 2),
    ("O", 0, 2),
    ("O", 1, 3),
    ("O", -1, 1),
    ("S", 0, 6),
    ("P", 0, 5),
    ("F", 0, 1),
    ("Cl", 0, 1),
    ("Br", 0, 1),
    ("I", 0, 1),
    ("B", 0, 3),
];

pub fn bond_capacity(element: Element, charge: i8) -> Option<u8> {
    VALENCE_TABLE
        .iter()
        .find(|&&(sym, c, _)| c == charge && sym == element.symbol())
        .map(|&(_, _, cap)| cap)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelfiesError {
    #[error("unknown SELFIES token {token:?} at position {pos}")]
    UnknownToken { pos: usize, token: String },
    #[error("malformed SELFIES text at byte {pos}")]
    Malformed { pos: usize },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Kekulize(#[from] KekulizeError),
}

/// A sequence of bracketed SELFIES tokens. The empty sequence is valid and
/// decodes to the empty molecule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SelfiesString {
    tokens: Vec<String>,
}

impl SelfiesString {
    pub fn new(tokens: Vec<String>) -> SelfiesString {
        SelfiesString { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for SelfiesString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tokens.iter().try_for_each(|t| f.write_str(t))
    }
}

impl FromStr for SelfiesString {
    type Err = SelfiesError;

    /// Splits concatenated text such as `"[C][=O]"` into tokens. Token
    /// contents are not checked here.
    fn from_str(s: &str) -> Result<SelfiesString, SelfiesError> {
        let mut tokens = Vec::new();
        let mut rest = s;
        let mut offset = 0;
        while !rest.is_empty() {
            if !rest.starts_with('[') {
                return Err(SelfiesError::Malformed { pos: offset });
            }
            let end = rest.find(']').ok_or(SelfiesError::Malformed { pos: offset })?;
            if rest[1..end].contains('[') || end == 1 {
                return Err(SelfiesError::Malformed { pos: offset });
            }
            tokens.push(rest[..=end].to_owned());
            offset += end + 1;
            rest = &rest[end + 1..];
        }
        Ok(SelfiesString { tokens })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AtomKind {
    pub element: Element,
    pub charge: i8,
    pub capacity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Symbol {
    Atom { order: u8, kind: AtomKind },
    Branch { order: u8, digits: usize },
    Ring { order: u8, digits: usize },
}

fn prefix(order: u8) -> &'static str {
    match order {
        2 => "=",
        3 => "#",
        _ => "",
    }
}

pub(crate) fn atom_token(order: u8, element: Element, charge: i8) -> String {
    let charge = match charge {
        0 => "",
        1 => "+1",
        _ => "-1",
    };
    format!("[{}{}{}]", prefix(order), element.symbol(), charge)
}

pub(crate) fn branch_token(order: u8, digits: usize) -> String {
    format!("[{}Branch{}]", prefix(order), digits)
}

pub(crate) fn ring_token(order: u8, digits: usize) -> String {
    format!("[{}Ring{}]", prefix(order), digits)
}

pub(crate) fn parse_symbol(token: &str) -> Option<Symbol> {
    let inner = token.strip_prefix('[')?.strip_suffix(']')?;
    let (order, body) = match inner.as_bytes().first()? {
        b'=' => (2, &inner[1..]),
        b'#' => (3, &inner[1..]),
        _ => (1, inner),
    };
    match body {
        "Branch1" => return Some(Symbol::Branch { order, digits: 1 }),
        "Branch2" => return Some(Symbol::Branch { order, digits: 2 }),
        "Ring1" => return Some(Symbol::Ring { order, digits: 1 }),
        "Ring2" => return Some(Symbol::Ring { order, digits: 2 }),
        _ => {}
    }
    let (symbol, charge) = if let Some(s) = body.strip_suffix("+1") {
        (s, 1)
    } else if let Some(s) = body.strip_suffix("-1") {
        (s, -1)
    } else {
        (body, 0)
    };
    let element = Element::from_symbol(symbol)?;
    let capacity = bond_capacity(element, charge)?;
    Some(Symbol::Atom {
        order,
        kind: AtomKind {
            element,
            charge,
            capacity,
        },
    })
}

/// Value of an index token; tokens outside the index alphabet count as 0.
pub(crate) fn index_value(token: Option<&str>) -> usize {
    token
        .and_then(|t| INDEX_ALPHABET.iter().position(|&d| d == t))
        .unwrap_or(0)
}

/// Every token of the alphabet, in a fixed order.
pub fn alphabet() -> Vec<String> {
    let mut out = Vec::new();
    for order in 1..=3 {
        for &(sym, charge, _) in &VALENCE_TABLE {
            out.push(atom_token(order, Element::from_symbol(sym).unwrap(), charge));
        }
        for digits in 1..=2 {
            out.push(branch_token(order, digits));
            out.push(ring_token(order, digits));
        }
    }
    out
}

/// Whether every atom's total bond order fits its capacity in
/// [`VALENCE_TABLE`]. Aromatic bonds and atom kinds outside the table fail.
pub fn satisfies_valence(g: &MolGraph) -> bool {
    (0..g.atom_count()).all(|i| {
        let a = g.atom(i);
        let Some(cap) = bond_capacity(a.element, a.charge) else {
            return false;
        };
        let used: Option<u32> = g
            .neighbors(i)
            .iter()
            .map(|&(_, b)| g.bonds()[b].order.multiplicity().map(u32::from))
            .sum();
        used.is_some_and(|u| u <= cap as u32)
    })
}

/// Graph isomorphism up to hydrogens, isotopes and chirality, which SELFIES
/// does not carry. Compares canonical strings.
pub fn same_molecule(a: &MolGraph, b: &MolGraph) -> bool {
    canonical_smiles(&strip(a)) == canonical_smiles(&strip(b))
}

fn strip(g: &MolGraph) -> MolGraph {
    let mut out = g.clone();
    for i in 0..out.atom_count() {
        let a = out.atom_mut(i);
        a.explicit_hydrogens = None;
        a.isotope = None;
        a.chirality = None;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    /// Zero-based line index in the input.
    pub line: usize,
    pub input: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelfiesConversion {
    /// Input line index and SELFIES text for every converted line.
    pub converted: Vec<(usize, String)>,
    pub skipped: Vec<SkippedLine>,
}

/// Converts SMILES lines one at a time. Lines that fail to parse, kekulize
/// or encode are listed in `skipped` with the reason.
///
/// ```
/// use chemberta_core::selfies::corpus_to_selfies;
/// let out = corpus_to_selfies(["CCO", "???"]);
/// assert_eq!(out.converted, [(0, "[C][C][O]".to_string())]);
/// assert_eq!(out.skipped.len(), 1);
/// ```
pub fn corpus_to_selfies<I, S>(lines: I) -> SelfiesConversion
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = SelfiesConversion::default();
    for (line, s) in lines.into_iter().enumerate() {
        let s = s.as_ref();
        match smiles_to_selfies(s) {
            Ok(sf) => out.converted.push((line, sf.to_string())),
            Err(e) => out.skipped.push(SkippedLine {
                line,
                input: s.to_owned(),
                reason: e.to_string(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_tokens_parse() {
        let a = alphabet();
        assert_eq!(a.len(), 3 * (14 + 4));
        for t in &a {
            assert!(parse_symbol(t).is_some(), "{t}");
        }
        for t in INDEX_ALPHABET {
            assert!(a.iter().any(|x| x == t), "{t}");
        }
        let mut dedup = a.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), a.len());
    }

    #[test]
    fn unknown_symbols() {
        for t in ["[Xe]", "[C+1]", "[Ring3]", "C", "[]", "[=]", "[S-1]"] {
            assert!(parse_symbol(t).is_none(), "{t}");
        }
    }

    #[test]
    fn capacities() {
        assert_eq!(bond_capacity(Element::C, 0), Some(4));
        assert_eq!(bond_capacity(Element::N, 1), Some(4));
        assert_eq!(bond_capacity(Element::O, -1), Some(1));
        assert_eq!(bond_capacity(Element::CL, 0), Some(1));
        assert_eq!(bond_capacity(Element::C, 1), None);
    }

    #[test]
    fn text_round_trip() {
        let s: SelfiesString = "[C][=Branch1][C][=O][O-1]".parse().unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.to_string(), "[C][=Branch1][C][=O][O-1]");
        assert!("".parse::<SelfiesString>().unwrap().is_empty());
        assert!("[C]C".parse::<SelfiesString>().is_err());
        assert!("[C".parse::<SelfiesString>().is_err());
        assert!("[C[O]]".parse::<SelfiesString>().is_err());
    }

    #[test]
    fn index_digits() {
        assert_eq!(index_value(Some("[C]")), 0);
        assert_eq!(index_value(Some("[=Branch1]")), 4);
        assert_eq!(index_value(Some("[P]")), 15);
        assert_eq!(index_value(Some("[F]")), 0);
        assert_eq!(index_value(None), 0);
    }

    #[test]
    fn corpus_conversion_reports() {
        let out = corpus_to_selfies(["CCO", "C=O"]);
        assert_eq!(out.converted.len(), 2);
        assert!(out.skipped.is_empty());
        let out = corpus_to_selfies(Vec::<String>::new());
        assert_eq!(out, SelfiesConversion::default());
        let out = corpus_to_selfies(["[Fe]", "c1ccnc1", "C"]);
        assert_eq!(out.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), [0, 1]);
    }
}
