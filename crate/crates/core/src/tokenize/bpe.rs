use std::collections::{BTreeMap, HashMap, HashSet};

use super::{TokenizeError, Vocab, MAX_VOCAB_SIZE, SPECIAL_TOKENS, UNK_TOKEN};

/// Merge rules in the order training selected them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeMerges(pub Vec<(String, String)>);

impl BpeMerges {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.0.iter()
    }

    /// The first `n` merges.
    pub fn truncated(&self, n: usize) -> BpeMerges {
        BpeMerges(self.0[..n.min(self.0.len())].to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct BpeTrainer {
    pub vocab_size: usize,
    /// Pairs seen fewer times than this are never merged.
    pub min_frequency: u64,
}

impl BpeTrainer {
    pub fn new(vocab_size: usize) -> BpeTrainer {
        BpeTrainer {
            vocab_size,
            min_frequency: 1,
        }
    }

    /// Learns merges over whole strings, one character per initial symbol.
    /// Among equally frequent pairs the lexicographically smallest
    /// `(left, right)` wins.
    pub fn train<I, S>(&self, corpus: I) -> Result<(Vocab, BpeMerges), TokenizeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
        for line in corpus {
            let line = line.as_ref();
            if !line.is_empty() {
                *word_counts.entry(line.to_owned()).or_default() += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(TokenizeError::EmptyCorpus);
        }
        if self.vocab_size > MAX_VOCAB_SIZE {
            return Err(TokenizeError::VocabTooLarge(self.vocab_size));
        }

        let alphabet: std::collections::BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
        let minimum = alphabet.len() + SPECIAL_TOKENS.len();
        if self.vocab_size <= minimum {
            return Err(TokenizeError::VocabTooSmall {
                requested: self.vocab_size,
                minimum: minimum + 1,
            });
        }

        let mut vocab = Vocab::with_specials();
        for c in &alphabet {
            vocab.insert(&c.to_string());
        }

        let mut words: Vec<(Vec<u32>, u64)> = word_counts
            .iter()
            .map(|(w, &n)| (w.chars().map(|c| vocab.id(&c.to_string()).unwrap()).collect(), n))
            .collect();

        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        let mut where_found: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (wi, (syms, n)) in words.iter().enumerate() {
            for p in syms.windows(2) {
                let pair = (p[0], p[1]);
                *pair_counts.entry(pair).or_default() += n;
                where_found.entry(pair).or_default().insert(wi);
            }
        }

        let mut merges = Vec::new();
        while vocab.len() < self.vocab_size {
            let best = pair_counts
                .iter()
                .filter(|(_, &c)| c >= self.min_frequency.max(1))
                .max_by(|(pa, ca), (pb, cb)| {
                    ca.cmp(cb).then_with(|| {
                        let ka = (vocab.token(pa.0).unwrap(), vocab.token(pa.1).unwrap());
                        let kb = (vocab.token(pb.0).unwrap(), vocab.token(pb.1).unwrap());
                        kb.cmp(&ka)
                    })
                })
                .map(|(&p, _)| p);
            let Some(pair) = best else { break };

            let left = vocab.token(pair.0).unwrap().to_owned();
            let right = vocab.token(pair.1).unwrap().to_owned();
            let merged = vocab.insert(&format!("{left}{right}"));
            merges.push((left, right));

            let affected: Vec<usize> = {
                let mut v: Vec<usize> = where_found.remove(&pair).unwrap_or_default().into_iter().collect();
                v.sort_unstable();
                v
            };
            for wi in affected {
                let (syms, n) = &mut words[wi];
                let n = *n;
                for p in syms.windows(2) {
                    let key = (p[0], p[1]);
                    if let Some(c) = pair_counts.get_mut(&key) {
                        *c -= n;
                        if *c == 0 {
                            pair_counts.remove(&key);
                        }
                    }
                }
                *syms = merge_pair(syms, pair, merged);
                for p in syms.windows(2) {
                    let key = (p[0], p[1]);
                    *pair_counts.entry(key).or_default() += n;
                    where_found.entry(key).or_default().insert(wi);
                }
            }
            pair_counts.remove(&pair);
        }
        Ok((vocab, BpeMerges(merges)))
    }
}

fn merge_pair(syms: &[u32], pair: (u32, u32), merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

/// Trains with the default trainer settings.
pub fn bpe_train<I, S>(corpus: I, target_vocab_size: usize) -> Result<(Vocab, BpeMerges), TokenizeError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    BpeTrainer::new(target_vocab_size).train(corpus)
}

/// Vocabulary plus merge ranks, ready for repeated encoding.
#[derive(Debug, Clone)]
pub struct BpeModel {
    vocab: Vocab,
    merges: BpeMerges,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl BpeModel {
    /// Merges whose parts or result are missing from the vocabulary are
    /// ignored.
    pub fn new(vocab: Vocab, merges: BpeMerges) -> BpeModel {
        let mut ranks = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            if let (Some(a), Some(b), Some(m)) = (vocab.id(l), vocab.id(r), vocab.id(&format!("{l}{r}"))) {
                ranks.entry((a, b)).or_insert((rank, m));
            }
        }
        BpeModel { vocab, merges, ranks }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn merges(&self) -> &BpeMerges {
        &self.merges
    }

    /// Token ids for `s`. Characters outside the vocabulary become the
    /// unknown token and split the string into independently merged pieces.
    pub fn encode_ids(&self, s: &str) -> Vec<u32> {
        let unk = self.vocab.id(UNK_TOKEN).expect("specials present");
        let mut out = Vec::new();
        let mut piece: Vec<u32> = Vec::new();
        let mut buf = [0u8; 4];
        for c in s.chars() {
            match self.vocab.id(c.encode_utf8(&mut buf)) {
                Some(id) if !super::is_special_id(id) => piece.push(id),
                _ => {
                    self.merge_piece(&mut piece);
                    out.append(&mut piece);
                    out.push(unk);
                }
            }
        }
        self.merge_piece(&mut piece);
        out.append(&mut piece);
        out
    }

    pub fn encode(&self, s: &str) -> Vec<String> {
        self.encode_ids(s)
            .into_iter()
            .map(|id| self.vocab.token(id).unwrap().to_owned())
            .collect()
    }

    fn merge_piece(&self, piece: &mut Vec<u32>) {
        loop {
            let best = piece
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, m)| (rank, (w[0], w[1]), m)))
                .min_by_key(|&(rank, _, _)| rank);
            let Some((_, pair, merged)) = best else { return };
            *piece = merge_pair(piece, pair, merged);
        }
    }
}

/// One-shot encoding; build a [`BpeModel`] when encoding many strings.
///
/// ```
/// use chemberta_core::tokenize::{bpe_encode, BpeMerges, Vocab};
/// let mut vocab = Vocab::with_specials();
/// vocab.insert("C");
/// vocab.insert("CC");
/// let merges = BpeMerges(vec![("C".into(), "C".into())]);
/// assert_eq!(bpe_encode("CCC", &vocab, &merges), ["CC", "C"]);
/// ```
pub fn bpe_encode(s: &str, vocab: &Vocab, merges: &BpeMerges) -> Vec<String> {
    BpeModel::new(vocab.clone(), merges.clone()).encode(s)
}
