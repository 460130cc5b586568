//! Tokenizers for molecular strings.
//!
//! Two strategies share one interface: the atom-level regex tokenizer and a
//! character-level byte-pair encoder trained on the corpus itself. Both map
//! into a [`Vocab`] whose first five ids are reserved for the special tokens
//! `<pad>`, `<unk>`, `<s>`, `</s>` and `<mask>`.

mod bpe;
mod regex;

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

pub use self::bpe::{bpe_encode, bpe_train, BpeMerges, BpeModel, BpeTrainer};
pub use self::regex::{regex_tokenize, regex_tokenize_spans, SMILES_REGEX};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const MASK_TOKEN: &str = "<mask>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;
pub const MASK_ID: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, MASK_TOKEN];

pub const MAX_VOCAB_SIZE: usize = 52_000;
pub const MAX_SEQUENCE_LENGTH: usize = 512;
/// Vocabulary target for desk-scale BPE training.
pub const DESK_VOCAB_SIZE: usize = 1_000;

pub fn is_special_id(id: u32) -> bool {
    (id as usize) < SPECIAL_TOKENS.len()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizeError {
    #[error("no tokenizer rule matches {found:?} at byte {pos}")]
    TokenizationGap { pos: usize, found: char },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {requested} is too small; need at least {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("vocabulary size {0} exceeds the 52,000 token limit")]
    VocabTooLarge(usize),
    #[error("invalid tokenizer document: {0}")]
    InvalidDocument(String),
}

/// Bijective token/id mapping with the special tokens at ids 0..5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn with_specials() -> Vocab {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIAL_TOKENS {
            v.insert(t);
        }
        v
    }

    /// Adds a token if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn from_map(map: BTreeMap<String, u32>) -> Result<Vocab, TokenizeError> {
        let mut tokens = vec![None; map.len()];
        for (tok, id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| TokenizeError::InvalidDocument(format!("id {id} is not contiguous")))?;
            if slot.is_some() {
                return Err(TokenizeError::InvalidDocument(format!("id {id} assigned twice")));
            }
            *slot = Some(tok);
        }
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.expect("filled")).collect();
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(TokenizeError::InvalidDocument(format!("special token {special} must have id {i}")));
            }
        }
        if tokens.len() > MAX_VOCAB_SIZE {
            return Err(TokenizeError::VocabTooLarge(tokens.len()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Vocab { tokens, index })
    }
}

/// Model-ready ids with begin/end markers and padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub overflow: bool,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of unpadded positions, markers included.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Wraps `tokens` in `<s>`…`</s>`, truncating to `max_len` and padding up to
/// it. Tokens missing from the vocabulary map to `<unk>`.
///
/// ```
/// use chemberta_core::tokenize::{encode_for_model, Vocab};
/// let mut vocab = Vocab::with_specials();
/// vocab.insert("C");
/// let seq = encode_for_model(&["C", "C"], &vocab, 8);
/// assert_eq!(seq.ids, [2, 5, 5, 3, 0, 0, 0, 0]);
/// assert_eq!(seq.attention_mask, [1, 1, 1, 1, 0, 0, 0, 0]);
/// ```
pub fn encode_for_model<S: AsRef<str>>(tokens: &[S], vocab: &Vocab, max_len: usize) -> TokenSequence {
    assert!(max_len >= 3, "max_len must leave room for one token between markers");
    let room = max_len - 2;
    let overflow = tokens.len() > room;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS_ID);
    ids.extend(
        tokens
            .iter()
            .take(room)
            .map(|t| vocab.id(t.as_ref()).unwrap_or(UNK_ID)),
    );
    ids.push(EOS_ID);
    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    TokenSequence {
        ids,
        attention_mask,
        overflow,
    }
}

/// A trained tokenizer of either kind.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Regex { vocab: Vocab },
    Bpe(BpeModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Regex,
    Bpe,
}

impl Tokenizer {
    /// Regex tokenizer whose vocabulary holds every token seen in `corpus`,
    /// most frequent first (ties alphabetical), capped at `max_vocab`.
    /// Lines the regex cannot cover are skipped.
    pub fn train_regex<I, S>(corpus: I, max_vocab: usize) -> Result<Tokenizer, TokenizeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_vocab > MAX_VOCAB_SIZE {
            return Err(TokenizeError::VocabTooLarge(max_vocab));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut any = false;
        for line in corpus {
            let line = line.as_ref();
            any |= !line.is_empty();
            if let Ok(toks) = regex_tokenize(line) {
                for t in toks {
                    *counts.entry(t.to_owned()).or_default() += 1;
                }
            }
        }
        if !any {
            return Err(TokenizeError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocab::with_specials();
        for (tok, _) in ranked {
            if vocab.len() >= max_vocab {
                break;
            }
            vocab.insert(&tok);
        }
        Ok(Tokenizer::Regex { vocab })
    }

    pub fn train_bpe<I, S>(corpus: I, trainer: &BpeTrainer) -> Result<Tokenizer, TokenizeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let (vocab, merges) = trainer.train(corpus)?;
        Ok(Tokenizer::Bpe(BpeModel::new(vocab, merges)))
    }

    pub fn kind(&self) -> TokenizerKind {
        match self {
            Tokenizer::Regex { .. } => TokenizerKind::Regex,
            Tokenizer::Bpe(_) => TokenizerKind::Bpe,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            Tokenizer::Regex { vocab } => vocab,
            Tokenizer::Bpe(m) => m.vocab(),
        }
    }

    /// Token strings with byte spans into `s`. Each `<unk>` from the BPE
    /// tokenizer covers exactly one character.
    pub fn tokenize_spans(&self, s: &str) -> Result<Vec<(String, Range<usize>)>, TokenizeError> {
        match self {
            Tokenizer::Regex { vocab } => Ok(regex_tokenize_spans(s)?
                .into_iter()
                .map(|(t, r)| {
                    let t = if vocab.id(t).is_some() { t } else { UNK_TOKEN };
                    (t.to_owned(), r)
                })
                .collect()),
            Tokenizer::Bpe(model) => {
                let mut out = Vec::new();
                let mut chars = s.char_indices().peekable();
                for id in model.encode_ids(s) {
                    let tok = model.vocab().token(id).unwrap();
                    let n_chars = if id == UNK_ID { 1 } else { tok.chars().count() };
                    let start = chars.peek().map_or(s.len(), |&(i, _)| i);
                    for _ in 0..n_chars {
                        chars.next();
                    }
                    let end = chars.peek().map_or(s.len(), |&(i, _)| i);
                    out.push((tok.to_owned(), start..end));
                }
                Ok(out)
            }
        }
    }

    pub fn tokenize(&self, s: &str) -> Result<Vec<String>, TokenizeError> {
        Ok(self.tokenize_spans(s)?.into_iter().map(|(t, _)| t).collect())
    }

    pub fn encode(&self, s: &str, max_len: usize) -> Result<TokenSequence, TokenizeError> {
        let toks = self.tokenize(s)?;
        Ok(encode_for_model(&toks, self.vocab(), max_len))
    }

    /// Concatenates non-special tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| !is_special_id(id))
            .filter_map(|&id| self.vocab().token(id))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let empty = BpeMerges::default();
        let merges = match self {
            Tokenizer::Regex { .. } => &empty,
            Tokenizer::Bpe(m) => m.merges(),
        };
        let doc = DocumentOut {
            version: 1,
            model: self.kind(),
            special_tokens: SpecialTokenNames::default(),
            vocab: VocabInIdOrder(self.vocab()),
            merges: merges.iter().map(|(l, r)| [l.as_str(), r.as_str()]).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Tokenizer, TokenizeError> {
        let doc: DocumentIn = serde_json::from_str(text).map_err(|e| TokenizeError::InvalidDocument(e.to_string()))?;
        if doc.version != 1 {
            return Err(TokenizeError::InvalidDocument(format!("unsupported version {}", doc.version)));
        }
        if doc.special_tokens != SpecialTokenNames::default() {
            return Err(TokenizeError::InvalidDocument("unexpected special tokens".into()));
        }
        let vocab = Vocab::from_map(doc.vocab)?;
        match doc.model {
            TokenizerKind::Regex => {
                if !doc.merges.is_empty() {
                    return Err(TokenizeError::InvalidDocument("regex tokenizer cannot have merges".into()));
                }
                Ok(Tokenizer::Regex { vocab })
            }
            TokenizerKind::Bpe => {
                let merges = BpeMerges(doc.merges.into_iter().map(|[l, r]| (l, r)).collect());
                Ok(Tokenizer::Bpe(BpeModel::new(vocab, merges)))
            }
        }
    }
}

#[derive(Debug, PartialEq, Eq, Serialize, Deserialize)]
struct SpecialTokenNames {
    pad: String,
    unk: String,
    bos: String,
    eos: String,
    mask: String,
}

impl Default for SpecialTokenNames {
    fn default() -> Self {
        SpecialTokenNames {
            pad: PAD_TOKEN.into(),
            unk: UNK_TOKEN.into(),
            bos: BOS_TOKEN.into(),
            eos: EOS_TOKEN.into(),
            mask: MASK_TOKEN.into(),
        }
    }
}

struct VocabInIdOrder<'a>(&'a Vocab);

impl Serialize for VocabInIdOrder<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (i, tok) in self.0.tokens().iter().enumerate() {
            map.serialize_entry(tok, &i)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    version: u32,
    model: TokenizerKind,
    special_tokens: SpecialTokenNames,
    vocab: VocabInIdOrder<'a>,
    merges: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentIn {
    version: u32,
    model: TokenizerKind,
    special_tokens: SpecialTokenNames,
    vocab: BTreeMap<String, u32>,
    merges: Vec<[String; 2]>,
}
