//! Corpus curation, labeled task ingestion, scaffold splitting and masked
//! language model example generation.

mod mlm;
mod split;
mod task;

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::molgraph::{canonical_smiles, parse_smiles};

pub use mlm::{make_mlm_example, make_mlm_examples, MaskingConfig, MlmExample};
pub use split::{scaffold_split, SplitIndices, DEFAULT_FRACTIONS};
pub use task::{load_task_csv, DroppedRow, TaskDataset, TaskRecord};

/// Desk-scale stand-ins for the 100K/250K/1M/10M pretraining subsets.
pub const DESK_SUBSET_SIZES: [usize; 4] = [1_000, 2_500, 10_000, 100_000];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("subset of {size} lines requested from a corpus of {count}")]
    SizeExceedsCorpus { size: usize, count: usize },
    #[error("subset sizes must be ascending")]
    SizesNotAscending,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("CSV has no column named {0:?}")]
    MissingColumn(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid split manifest: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupMode {
    /// Identical strings only.
    #[default]
    Exact,
    /// Strings whose parsed molecules share a canonical form. Unparseable
    /// lines fall back to exact matching.
    CanonicalKey,
}

/// Curated molecule strings, one per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub lines: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Reads a line-oriented file. Line endings are stripped; nothing else is
    /// touched.
    pub fn read(path: &Path) -> Result<Corpus, DataError> {
        let file = std::fs::File::open(path)?;
        let lines = io::BufReader::new(file).lines().collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus { lines })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for line in &self.lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in &self.lines {
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CurateReport {
    pub input_lines: usize,
    pub empty_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Trims, drops empty lines, removes duplicates (first occurrence wins) and
/// shuffles with a seeded generator.
///
/// ```
/// use chemberta_core::datapipe::{curate, DedupMode};
/// let (c, report) = curate(["CCO", "CCO", "C", " "], DedupMode::Exact, 7);
/// assert_eq!(c.len(), 2);
/// assert_eq!(report.duplicates_dropped, 1);
/// ```
pub fn curate<I, S>(lines: I, mode: DedupMode, seed: u64) -> (Corpus, CurateReport)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = CurateReport::default();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in lines {
        report.input_lines += 1;
        let line = line.as_ref().trim();
        if line.is_empty() {
            report.empty_dropped += 1;
            continue;
        }
        let key = match mode {
            DedupMode::Exact => line.to_owned(),
            DedupMode::CanonicalKey => match parse_smiles(line) {
                Ok(g) => format!("g:{}", canonical_smiles(&g)),
                Err(_) => format!("s:{line}"),
            },
        };
        if seen.insert(key) {
            out.push(line.to_owned());
        } else {
            report.duplicates_dropped += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    (Corpus { lines: out }, report)
}

/// Nested prefixes of `c`: every subset is a prefix of each larger one.
pub fn subset(c: &Corpus, sizes: &[usize]) -> Result<Vec<Corpus>, DataError> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(DataError::SizesNotAscending);
    }
    sizes
        .iter()
        .map(|&size| {
            if size > c.len() {
                Err(DataError::SizeExceedsCorpus { size, count: c.len() })
            } else {
                Ok(Corpus {
                    lines: c.lines[..size].to_vec(),
                })
            }
        })
        .collect()
}
