//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `CHMBCKPT` |
//! | 8 | header length `h` as `u64` |
//! | h | UTF-8 JSON header |
//! | rest | raw `f64` tensor payload |
//!
//! The header holds `format_version`, the model `config`, the training
//! `step`, optional `optimizer` settings, an optional embedded `tokenizer`,
//! and a `tensors` list of `{name, dtype, shape, offset}` entries where
//! `offset` counts bytes from the start of the payload. Optimizer moments,
//! when present, are stored as extra tensors named `adam.m.<name>` and
//! `adam.v.<name>`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, Model, ModelConfig, ModelError, Params, Tensor};
use crate::tokenize::Tokenizer;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CHMBCKPT";
const FORMAT_VERSION: u32 = 1;

/// Weights plus everything needed to resume or reuse them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Params,
    pub step: u64,
    pub optimizer: Option<AdamState>,
    pub tokenizer: Option<Tokenizer>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, step: u64) -> Checkpoint {
        Checkpoint {
            config: model.config.clone(),
            params: model.params.clone(),
            step,
            optimizer: None,
            tokenizer: None,
        }
    }

    pub fn to_model(&self) -> Model {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    #[serde(default)]
    optimizer: Option<OptimizerHeader>,
    #[serde(default)]
    tokenizer: Option<serde_json::Value>,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

fn moment_names(params: &Params, prefix: &str) -> Vec<String> {
    params.names().iter().map(|n| format!("{prefix}{n}")).collect()
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut out: W) -> std::io::Result<()> {
    let mut named: Vec<(String, &Tensor)> = ck.params.names().iter().cloned().zip(ck.params.tensors()).collect();
    if let Some(opt) = &ck.optimizer {
        let (m, v) = opt.moments();
        named.extend(moment_names(&ck.params, "adam.m.").into_iter().zip(m.tensors()));
        named.extend(moment_names(&ck.params, "adam.v.").into_iter().zip(v.tensors()));
    }
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(named.len());
    for (name, t) in &named {
        entries.push(Entry {
            name: name.clone(),
            dtype: "f64".into(),
            shape: t.shape.clone(),
            offset,
        });
        offset += 8 * t.len() as u64;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: ck.config.clone(),
        step: ck.step,
        optimizer: ck.optimizer.as_ref().map(|o| OptimizerHeader {
            config: o.config,
            step: o.step_count(),
        }),
        tokenizer: ck
            .tokenizer
            .as_ref()
            .map(|t| serde_json::from_str(&t.to_json()).expect("tokenizer JSON is valid")),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(offset as usize);
    for (_, t) in &named {
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint(msg.into())
}

/// Parses a checkpoint. With `expected`, a differing stored configuration
/// is a [`ModelError::ConfigMismatch`].
pub fn read_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint, ModelError> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes"));
    let hend = usize::try_from(hlen)
        .ok()
        .and_then(|h| h.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header runs past end of file"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..hend]).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {}", header.format_version)));
    }
    if let Some(want) = expected {
        if *want != header.config {
            return Err(ModelError::ConfigMismatch {
                expected: serde_json::to_string(want).expect("serializable"),
                found: serde_json::to_string(&header.config).expect("serializable"),
            });
        }
    }
    header
        .config
        .validate()
        .map_err(|e| corrupt(format!("stored configuration is invalid: {e}")))?;
    let payload = &bytes[hend..];

    let layout = Params::zeros(&header.config);
    let mut names = layout.names().to_vec();
    if header.optimizer.is_some() {
        names.extend(moment_names(&layout, "adam.m."));
        names.extend(moment_names(&layout, "adam.v."));
    }
    let shapes: Vec<&[usize]> = layout.tensors().iter().map(|t| t.shape.as_slice()).collect();
    if header.tensors.len() != names.len() {
        return Err(corrupt(format!(
            "expected {} tensors, header lists {}",
            names.len(),
            header.tensors.len()
        )));
    }
    let mut tensors = Vec::with_capacity(names.len());
    let mut consumed = 0usize;
    for (i, (entry, name)) in header.tensors.iter().zip(&names).enumerate() {
        let shape = shapes[i % shapes.len()];
        if entry.name != *name || entry.shape != shape || entry.dtype != "f64" {
            return Err(corrupt(format!(
                "tensor {i} is {} {:?} {}, expected {name} {shape:?} f64",
                entry.name, entry.shape, entry.dtype
            )));
        }
        let n: usize = shape.iter().product();
        let start = usize::try_from(entry.offset).map_err(|_| corrupt("offset overflow"))?;
        let end = start
            .checked_add(8 * n)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| corrupt(format!("payload of {name} truncated")))?;
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        consumed += 8 * n;
        tensors.push(Tensor::from_vec(shape, data));
    }
    if consumed != payload.len() {
        return Err(corrupt(format!(
            "payload holds {} bytes, tensors cover {consumed}",
            payload.len()
        )));
    }

    let n_params = layout.len();
    let mut rest = tensors.split_off(n_params);
    let params = Params::from_parts(layout.names().to_vec(), tensors, header.config.n_layers);
    let optimizer = header.optimizer.map(|o| {
        let v = rest.split_off(n_params);
        AdamState::from_parts(
            o.config,
            Params::from_parts(layout.names().to_vec(), rest, header.config.n_layers),
            Params::from_parts(layout.names().to_vec(), v, header.config.n_layers),
            o.step,
        )
    });
    let tokenizer = match header.tokenizer {
        None => None,
        Some(v) => {
            let t = Tokenizer::from_json(&v.to_string()).map_err(|e| corrupt(format!("embedded tokenizer: {e}")))?;
            if t.vocab().len() != header.config.vocab_size {
                return Err(corrupt(format!(
                    "embedded tokenizer has {} tokens, model expects {}",
                    t.vocab().len(),
                    header.config.vocab_size
                )));
            }
            Some(t)
        }
    };
    Ok(Checkpoint {
        config: header.config,
        params,
        step: header.step,
        optimizer,
        tokenizer,
    })
}

/// Writes to a sibling temporary file and renames it into place, so a
/// crash never leaves a half-written checkpoint at `path`.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_checkpoint(ck, &mut buf)?;
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&bytes, expected)
}
