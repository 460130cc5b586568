//! A RoBERTa-style transformer encoder with a masked-language-model head and
//! a two-class classification head, trained with hand-written gradients.
//!
//! Layers are post-norm: each sublayer output is added to its input and the
//! sum is layer-normalized. Attention ignores padded key positions through
//! an additive `-1e9`; a sequence with no real tokens attends to position 0.
//!
//! ```
//! use chemberta_core::model::{Batch, Model, ModelConfig};
//! let model = Model::new(ModelConfig::tiny(12), 0).unwrap();
//! let batch = Batch::from_rows(&[vec![2, 5, 6, 3]], &[vec![1, 1, 1, 1]]).unwrap();
//! let logits = model.forward_classify(&batch).unwrap();
//! assert_eq!(logits.shape, [1, 2]);
//! ```

mod adam;
mod checkpoint;
mod encoder;
mod params;
mod tensor;

use serde::{Deserialize, Serialize};

use crate::datapipe::MlmExample;
use crate::tokenize::{TokenSequence, MAX_SEQUENCE_LENGTH};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use encoder::AttentionRecord;
pub use params::Params;
pub use tensor::{gelu, gelu_grad, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("no position in the batch carries an MLM label")]
    AllPositionsIgnored,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint configuration differs: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    /// Two layers, two heads, width 64: small enough to train on a laptop
    /// core in minutes.
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_positions: MAX_SEQUENCE_LENGTH,
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            d_ff: 256,
            dropout: 0.1,
            init_std: 0.02,
            layer_norm_eps: 1e-5,
        }
    }

    /// Six layers of twelve heads with RoBERTa-base widths.
    pub fn full(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 768,
            n_heads: 12,
            n_layers: 6,
            d_ff: 3072,
            ..ModelConfig::desk(vocab_size)
        }
    }

    /// Width 8, two layers, two heads, no dropout; used for gradient checks.
    pub fn tiny(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_positions: 16,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            dropout: 0.0,
            init_std: 0.02,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Number of distinct attention heads across all layers.
    pub fn attention_mechanisms(&self) -> usize {
        self.n_layers * self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.vocab_size < 6 {
            return bad("vocabulary must hold the special tokens and at least one more");
        }
        if self.n_heads == 0 || self.n_layers == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("sizes must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_positions == 0 || self.max_positions > MAX_SEQUENCE_LENGTH {
            return bad("max_positions must lie in 1..=512");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.init_std > 0.0) || !(self.layer_norm_eps > 0.0) {
            return bad("init_std and layer_norm_eps must be positive");
        }
        Ok(())
    }
}

/// Token ids and attention mask for `size` sequences of length `len`,
/// row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub size: usize,
    pub len: usize,
}

impl Batch {
    pub fn from_rows(ids: &[Vec<u32>], masks: &[Vec<u8>]) -> Result<Batch, ModelError> {
        let len = ids.first().map_or(0, Vec::len);
        if ids.len() != masks.len() || ids.iter().any(|r| r.len() != len) {
            return Err(ModelError::ShapeMismatch("ragged batch".into()));
        }
        if masks.iter().any(|m| m.len() != len) {
            return Err(ModelError::ShapeMismatch("mask length differs from ids".into()));
        }
        Ok(Batch {
            ids: ids.concat(),
            mask: masks.concat(),
            size: ids.len(),
            len,
        })
    }

    /// Stacks sequences, dropping trailing columns that are padding in every
    /// row (at least one column is kept).
    pub fn from_sequences(seqs: &[&TokenSequence]) -> Result<Batch, ModelError> {
        let width = trimmed_width(seqs.iter().map(|s| s.attention_mask.as_slice()));
        let ids: Vec<Vec<u32>> = seqs.iter().map(|s| s.ids[..width.min(s.ids.len())].to_vec()).collect();
        let masks: Vec<Vec<u8>> = seqs
            .iter()
            .map(|s| s.attention_mask[..width.min(s.attention_mask.len())].to_vec())
            .collect();
        Batch::from_rows(&ids, &masks)
    }

    /// Like [`Batch::from_sequences`], also returning the flattened labels.
    pub fn from_mlm(examples: &[&MlmExample]) -> Result<(Batch, Vec<Option<u32>>), ModelError> {
        let width = trimmed_width(examples.iter().map(|e| e.attention_mask.as_slice()));
        let cut = |v: &[u32]| v[..width.min(v.len())].to_vec();
        let ids: Vec<Vec<u32>> = examples.iter().map(|e| cut(&e.input_ids)).collect();
        let masks: Vec<Vec<u8>> = examples
            .iter()
            .map(|e| e.attention_mask[..width.min(e.attention_mask.len())].to_vec())
            .collect();
        let labels: Vec<Option<u32>> = examples
            .iter()
            .flat_map(|e| e.labels[..width.min(e.labels.len())].iter().copied())
            .collect();
        Ok((Batch::from_rows(&ids, &masks)?, labels))
    }

    /// Number of unmasked positions in row `row`.
    pub fn real_len(&self, row: usize) -> usize {
        self.mask[row * self.len..(row + 1) * self.len]
            .iter()
            .filter(|&&m| m == 1)
            .count()
    }
}

fn trimmed_width<'a>(masks: impl Iterator<Item = &'a [u8]>) -> usize {
    masks
        .map(|m| m.iter().rposition(|&x| x == 1).map_or(0, |p| p + 1))
        .max()
        .unwrap_or(0)
        .max(1)
}

/// Training targets for one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    /// One entry per position, `None` where no prediction is scored.
    Mlm(Vec<Option<u32>>),
    /// One label per row.
    Classify(Vec<bool>),
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(Model { config, params })
    }

    /// Zeroes the classification head.
    pub fn zero_classifier(&mut self) {
        for name in ["classifier.weight", "classifier.bias"] {
            if let Some(t) = self.params.get_mut(name) {
                t.data.fill(0.0);
            }
        }
    }

    /// Re-initializes the classification head from `seed`, leaving the
    /// encoder untouched.
    pub fn reset_classifier(&mut self, seed: u64) {
        let fresh = Params::init(&self.config, seed);
        for name in ["classifier.weight", "classifier.bias"] {
            let src = fresh.get(name).expect("layout").clone();
            *self.params.get_mut(name).expect("layout") = src;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{encode_for_model, Vocab};

    #[test]
    fn full_size_shape_has_72_heads() {
        let cfg = ModelConfig::full(1000);
        cfg.validate().unwrap();
        assert_eq!(cfg.attention_mechanisms(), 72);
        assert_eq!(ModelConfig::desk(100).attention_mechanisms(), 4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::desk(100);
        cfg.n_heads = 3;
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidConfig(_))));
        let mut cfg = ModelConfig::desk(100);
        cfg.max_positions = 513;
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::desk(3).validate().is_err());
    }

    #[test]
    fn batch_trims_shared_padding() {
        let mut v = Vocab::with_specials();
        v.insert("C");
        let a = encode_for_model(&["C", "C"], &v, 16);
        let b = encode_for_model(&["C"], &v, 16);
        let batch = Batch::from_sequences(&[&a, &b]).unwrap();
        assert_eq!(batch.len, 4);
        assert_eq!(batch.mask, [1, 1, 1, 1, 1, 1, 1, 0]);
        assert_eq!(batch.real_len(1), 3);
        assert!(Batch::from_rows(&[vec![1, 2], vec![1]], &[vec![1, 1], vec![1]]).is_err());
    }
}
