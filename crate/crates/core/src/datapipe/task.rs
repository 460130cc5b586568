use std::io::Read;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::molgraph::parse_smiles;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub smiles: String,
    pub label: bool,
}

/// One binary classification task. Every record's SMILES parses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_name: String,
    pub records: Vec<TaskRecord>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Writes the two-column CSV that [`load_task_csv`] reads back.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["smiles", &self.task_name]).expect("in-memory write");
        for r in &self.records {
            w.write_record([r.smiles.as_str(), if r.label { "1" } else { "0" }])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRow {
    /// Zero-based data row, header excluded.
    pub row: usize,
    pub reason: String,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "1.0" => Some(true),
        "0" | "0.0" => Some(false),
        _ => None,
    }
}

/// Reads a headed CSV with a `smiles` column and the binary label column
/// `label_column`. Rows with a missing or non-binary label, or SMILES that
/// does not parse, are dropped and reported.
///
/// ```
/// use chemberta_core::datapipe::load_task_csv;
/// let csv = "smiles,CT_TOX\nCCO,0\nc1ccccc1N,1\nC(,1\nCC,\n";
/// let (task, dropped) = load_task_csv(csv.as_bytes(), "CT_TOX").unwrap();
/// assert_eq!(task.len(), 2);
/// assert_eq!(dropped.len(), 2);
/// ```
pub fn load_task_csv<R: Read>(reader: R, label_column: &str) -> Result<(TaskDataset, Vec<DroppedRow>), DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))
    };
    let smiles_col = find("smiles")?;
    let label_col = find(label_column)?;

    let mut task = TaskDataset {
        task_name: label_column.to_owned(),
        records: Vec::new(),
    };
    let mut dropped = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let smiles = rec.get(smiles_col).unwrap_or("").trim();
        let Some(label) = rec.get(label_col).and_then(parse_label) else {
            dropped.push(DroppedRow {
                row,
                reason: "missing or non-binary label".into(),
            });
            continue;
        };
        if let Err(e) = parse_smiles(smiles) {
            dropped.push(DroppedRow {
                row,
                reason: format!("unparseable SMILES: {e}"),
            });
            continue;
        }
        task.records.push(TaskRecord {
            smiles: smiles.to_owned(),
            label,
        });
    }
    Ok((task, dropped))
}
