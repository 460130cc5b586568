use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tokenize::{is_special_id, TokenSequence, MASK_ID, SPECIAL_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingConfig {
    /// Probability that a real, non-special position is selected.
    pub mask_rate: f64,
    /// Share of selected positions replaced by `<mask>`.
    pub mask_share: f64,
    /// Share of selected positions replaced by a random non-special token.
    /// The rest keep their original token.
    pub random_share: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_rate: 0.15,
            mask_share: 0.8,
            random_share: 0.1,
        }
    }
}

/// A corrupted sequence with reconstruction targets. `labels[i]` holds the
/// original id exactly at selected positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmExample {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub labels: Vec<Option<u32>>,
}

impl MlmExample {
    pub fn masked_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Corrupts one sequence. Random replacements are drawn uniformly from the
/// non-special ids below `vocab_size`.
pub fn make_mlm_example<R: Rng>(seq: &TokenSequence, vocab_size: usize, cfg: &MaskingConfig, rng: &mut R) -> MlmExample {
    assert!(
        cfg.mask_rate > 0.0 && cfg.mask_rate < 1.0,
        "mask rate must lie strictly between 0 and 1"
    );
    let first_regular = SPECIAL_TOKENS.len() as u32;
    let mut input_ids = seq.ids.clone();
    let mut labels = vec![None; seq.ids.len()];
    for (i, &id) in seq.ids.iter().enumerate() {
        if seq.attention_mask[i] == 0 || is_special_id(id) {
            continue;
        }
        if rng.random::<f64>() >= cfg.mask_rate {
            continue;
        }
        labels[i] = Some(id);
        let r: f64 = rng.random();
        if r < cfg.mask_share {
            input_ids[i] = MASK_ID;
        } else if r < cfg.mask_share + cfg.random_share && (vocab_size as u32) > first_regular {
            input_ids[i] = rng.random_range(first_regular..vocab_size as u32);
        }
    }
    MlmExample {
        input_ids,
        attention_mask: seq.attention_mask.clone(),
        labels,
    }
}

/// Corrupts a batch for one epoch. The generator is keyed by `(seed, epoch)`
/// so each epoch sees a fresh mask while reruns stay identical.
///
/// ```
/// use chemberta_core::datapipe::{make_mlm_examples, MaskingConfig};
/// use chemberta_core::tokenize::{encode_for_model, Vocab};
/// let mut vocab = Vocab::with_specials();
/// vocab.insert("C");
/// let seq = encode_for_model(&vec!["C"; 40], &vocab, 42);
/// let a = make_mlm_examples(&[seq.clone()], vocab.len(), &MaskingConfig::default(), 9, 0);
/// let b = make_mlm_examples(&[seq], vocab.len(), &MaskingConfig::default(), 9, 0);
/// assert_eq!(a, b);
/// ```
pub fn make_mlm_examples(
    seqs: &[TokenSequence],
    vocab_size: usize,
    cfg: &MaskingConfig,
    seed: u64,
    epoch: u64,
) -> Vec<MlmExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    seqs.iter()
        .map(|s| make_mlm_example(s, vocab_size, cfg, &mut rng))
        .collect()
}
