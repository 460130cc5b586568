//! Atomic artifact writes and the run manifest that accompanies them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    fn of(path: &Path, bytes: &[u8]) -> FileRecord {
        FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

/// What a command read, what it wrote, and the settings that produced it.
/// Holds no timestamps, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub struct Run {
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, seed: Option<u64>) -> Run {
        Run {
            manifest: RunManifest {
                manifest_version: MANIFEST_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                seed,
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                notes: BTreeMap::new(),
            },
        }
    }

    pub fn config<T: Serialize>(&mut self, cfg: &T) {
        self.manifest.config = serde_json::to_value(cfg).expect("configs serialize");
    }

    pub fn note<T: Serialize>(&mut self, key: &str, value: T) {
        self.manifest
            .notes
            .insert(key.into(), serde_json::to_value(value).expect("notes serialize"));
    }

    /// Reads an input file and records its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.manifest.inputs.push(FileRecord::of(path, &bytes));
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(FileRecord::of(path, bytes));
        Ok(())
    }

    /// Writes the manifest itself and returns where it went.
    pub fn finish(self, path: PathBuf) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Manifest location for a single-file artifact.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Re-hashes every recorded file. Returns one message per mismatch.
pub fn verify(manifest: &RunManifest) -> Vec<String> {
    let mut problems = Vec::new();
    for (kind, rec) in manifest
        .inputs
        .iter()
        .map(|r| ("input", r))
        .chain(manifest.outputs.iter().map(|r| ("output", r)))
    {
        match fs::read(&rec.path) {
            Err(e) => problems.push(format!("{kind} {}: {e}", rec.path)),
            Ok(bytes) => {
                let got = sha256_hex(&bytes);
                if got != rec.sha256 {
                    problems.push(format!("{kind} {}: sha256 {got}, manifest says {}", rec.path, rec.sha256));
                }
            }
        }
    }
    problems
}

pub fn load(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if m.manifest_version != MANIFEST_VERSION {
        bail!("unsupported manifest version {}", m.manifest_version);
    }
    Ok(m)
}
