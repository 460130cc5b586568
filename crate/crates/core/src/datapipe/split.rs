use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DataError, TaskDataset};
use crate::molgraph::{murcko_scaffold, parse_smiles, scaffold_key};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Row indices of each partition, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable") + "\n"
    }

    /// Parses a manifest and checks it partitions `0..n`.
    pub fn from_json(text: &str, n: usize) -> Result<SplitIndices, DataError> {
        let s: SplitIndices = serde_json::from_str(text).map_err(|e| DataError::InvalidSplit(e.to_string()))?;
        let mut seen = vec![false; n];
        for &i in s.train.iter().chain(&s.valid).chain(&s.test) {
            if i >= n {
                return Err(DataError::InvalidSplit(format!("index {i} out of range for {n} records")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DataError::InvalidSplit(format!("index {i} appears twice")));
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(DataError::InvalidSplit("split does not cover every record".into()));
        }
        Ok(s)
    }
}

/// Groups records by scaffold key and fills train, then valid, then test
/// with whole groups, largest first (ties by key). A group goes to train
/// while train holds fewer than `fracs[0]·n` records, otherwise to valid
/// while train and valid together hold fewer than `(fracs[0]+fracs[1])·n`.
///
/// ```
/// use chemberta_core::datapipe::{scaffold_split, TaskDataset, TaskRecord, DEFAULT_FRACTIONS};
/// let rings = ["C1CC1", "C1CCC1", "C1CCCC1", "C1CCCCC1", "C1CCCCCC1",
///              "c1ccccc1", "C1CC2CC12", "c1ccncc1", "C1CCOC1", "C1CCNC1"];
/// let task = TaskDataset {
///     task_name: "t".into(),
///     records: rings.iter().map(|s| TaskRecord { smiles: s.to_string(), label: false }).collect(),
/// };
/// let split = scaffold_split(&task, DEFAULT_FRACTIONS).unwrap();
/// assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (8, 1, 1));
/// ```
pub fn scaffold_split(d: &TaskDataset, fracs: [f64; 3]) -> Result<SplitIndices, DataError> {
    if d.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(DataError::InvalidFractions(fracs));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in d.records.iter().enumerate() {
        // Records are validated at load time; anything unparseable still
        // gets a stable group of its own text.
        let key = match parse_smiles(&r.smiles) {
            Ok(g) => scaffold_key(&murcko_scaffold(&g)),
            Err(_) => format!("!{}", r.smiles),
        };
        groups.entry(key).or_default().push(i);
    }
    let mut groups: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));

    let n = d.len() as f64;
    let train_cut = fracs[0] * n - 1e-9;
    let valid_cut = (fracs[0] + fracs[1]) * n - 1e-9;
    let mut split = SplitIndices::default();
    for (_, members) in groups {
        let target = if (split.train.len() as f64) < train_cut {
            &mut split.train
        } else if ((split.train.len() + split.valid.len()) as f64) < valid_cut {
            &mut split.valid
        } else {
            &mut split.test
        };
        target.extend(members);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
