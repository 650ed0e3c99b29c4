//! Whitespace tokenizer with a corpus-built vocabulary.
//!
//! Lowercased whitespace tokens, an `<unk>` id for out-of-vocabulary words,
//! and a `<cls>` token prepended to every sequence as the pooling anchor.
//! Subword modelling is deliberately out of scope.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Padding id, also row 0 of the embedding table.
pub const PAD_ID: usize = 0;
/// Unknown-word id.
pub const UNK_ID: usize = 1;
/// Classification/pooling anchor, prepended to every sequence.
pub const CLS_ID: usize = 2;
/// Number of reserved ids before corpus words start.
pub const NUM_SPECIALS: usize = 3;

#[derive(Clone, Debug)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// Unigram counts per id, from the build corpus (specials stay 0).
    counts: Vec<u64>,
}

/// One tokenized sentence: ids, padding mask and the original text.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// 1 for real tokens (including `<cls>`), 0 for padding.
    pub mask: Vec<u8>,
    pub raw_text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn active_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

impl Vocab {
    /// Build from corpus lines: lowercase whitespace tokens ranked by
    /// frequency (ties broken alphabetically), after the reserved specials.
    pub fn build<'a>(lines: impl IntoIterator<Item = &'a str>) -> Self {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for line in lines {
            for tok in line.split_whitespace() {
                *freq.entry(tok.to_lowercase()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut words = vec!["<pad>".to_string(), "<unk>".to_string(), "<cls>".to_string()];
        let mut counts = vec![0u64; NUM_SPECIALS];
        for (w, c) in ranked {
            words.push(w);
            counts.push(c);
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index, counts }
    }

    /// Reconstruct from a persisted word list (checkpoint `vocab.txt`).
    pub fn from_words(words: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if words.len() < NUM_SPECIALS {
            return Err(Error::Checkpoint("vocab shorter than reserved specials".into()));
        }
        if counts.len() != words.len() {
            return Err(Error::Checkpoint("vocab counts length mismatch".into()));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Self { words, index, counts })
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// True for ids that carry corpus words (not `<pad>`/`<unk>`/`<cls>`).
    /// `<unk>` is excluded from the perturbation table and RTD editing
    /// because it aliases arbitrarily many surface forms.
    pub fn is_word_id(&self, id: usize) -> bool {
        id >= NUM_SPECIALS && id < self.words.len()
    }

    /// Tokenize one sentence; prepends `<cls>` and truncates to `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> TokenSequence {
        assert!(max_len >= 1, "max_len must allow at least the <cls> token");
        let mut ids = vec![CLS_ID];
        for tok in text.split_whitespace() {
            if ids.len() == max_len {
                break;
            }
            let id = self.id_of(&tok.to_lowercase()).unwrap_or(UNK_ID);
            ids.push(id);
        }
        let mask = vec![1u8; ids.len()];
        TokenSequence { ids, mask, raw_text: text.to_string() }
    }
}

/// Pad sequences to the longest length in the batch.
pub fn pad_to_common(batch: &[TokenSequence]) -> Vec<TokenSequence> {
    let l = batch.iter().map(|s| s.len()).max().unwrap_or(0);
    batch
        .iter()
        .map(|s| {
            let mut ids = s.ids.clone();
            let mut mask = s.mask.clone();
            ids.resize(l, PAD_ID);
            mask.resize(l, 0);
            TokenSequence { ids, mask, raw_text: s.raw_text.clone() }
        })
        .collect()
}
