use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use super::TokenizeError;

/// Atom-level SMILES pattern from the molecular-transformer reaction
/// prediction work (Schwaller et al.): bracket atoms, the two-letter
/// halogens, organic and aromatic atoms, bond and branch symbols, and ring
/// labels.
pub const SMILES_REGEX: &str =
    r"(\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9])";

static PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(SMILES_REGEX).expect("valid pattern"));

/// Splits a SMILES string into atom-level tokens with their byte spans.
/// Every byte must be covered; the first uncovered byte is reported.
pub fn regex_tokenize_spans(s: &str) -> Result<Vec<(&str, Range<usize>)>, TokenizeError> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for m in PATTERN.find_iter(s) {
        if m.start() != cursor {
            return Err(gap(s, cursor));
        }
        out.push((m.as_str(), m.range()));
        cursor = m.end();
    }
    if cursor != s.len() {
        return Err(gap(s, cursor));
    }
    Ok(out)
}

/// ```
/// use chemberta_core::tokenize::regex_tokenize;
/// assert_eq!(regex_tokenize("CC(=O)Cl").unwrap(), ["C", "C", "(", "=", "O", ")", "Cl"]);
/// ```
pub fn regex_tokenize(s: &str) -> Result<Vec<&str>, TokenizeError> {
    Ok(regex_tokenize_spans(s)?.into_iter().map(|(t, _)| t).collect())
}

fn gap(s: &str, pos: usize) -> TokenizeError {
    TokenizeError::TokenizationGap {
        pos,
        found: s[pos..].chars().next().unwrap_or('\0'),
    }
}
