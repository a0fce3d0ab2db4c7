use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::{DataError, Instance};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// Token ↔ id mapping with the four reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    min_freq: usize,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Self::from_tokens(r.tokens, r.min_freq)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            tokens: v.tokens,
            min_freq: v.min_freq,
        }
    }
}

impl Vocabulary {
    /// Builds from a full token list whose first four entries are the
    /// reserved tokens.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, ids, min_freq }
    }

    /// Assigns ids by descending frequency, ties broken lexicographically,
    /// to every token seen at least `min_freq` times.
    pub fn from_counts(counts: &HashMap<String, usize>, min_freq: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_freq)
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = [PAD, UNK, CLS, SEP]
            .into_iter()
            .map(String::from)
            .chain(kept.into_iter().map(|(t, _)| t.clone()))
            .collect();
        Self::from_tokens(tokens, min_freq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Counts tokens over passages, substituted options and (optionally)
/// candidate definitions, then builds the vocabulary.
pub fn build_vocab(instances: &[Instance], use_definitions: bool, min_freq: usize) -> Result<Vocabulary, DataError> {
    if instances.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut add = |text: &str| {
        for t in tokenize(text) {
            *counts.entry(t).or_default() += 1;
        }
    };
    for inst in instances {
        add(&inst.passage);
        for (j, option) in inst.options()?.iter().enumerate() {
            add(option);
            if use_definitions {
                add(inst.definition(j));
            }
        }
    }
    if counts.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    Ok(Vocabulary::from_counts(&counts, min_freq.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(text: &str) -> HashMap<String, usize> {
        let mut c = HashMap::new();
        for t in tokenize(text) {
            *c.entry(t).or_default() += 1;
        }
        c
    }

    #[test]
    fn threshold() {
        let v = Vocabulary::from_counts(&counts("a a b"), 2);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn deterministic_ids() {
        let c = counts("z y x y z z w");
        assert_eq!(Vocabulary::from_counts(&c, 1), Vocabulary::from_counts(&c, 1));
        let v = Vocabulary::from_counts(&c, 1);
        assert_eq!(&v.tokens()[4..], ["z", "y", "w", "x"]);
    }

    #[test]
    fn min_freq_one_keeps_everything() {
        let v = Vocabulary::from_counts(&counts("the cat sat"), 1);
        assert_eq!(v.len(), 4 + 3);
        assert_eq!(v.token(CLS_ID), Some(CLS));
        assert_eq!(v.token(SEP_ID), Some(SEP));
        assert_eq!(v.token(PAD_ID), Some(PAD));
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(build_vocab(&[], true, 1), Err(DataError::EmptyCorpus)));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::from_counts(&counts("a b b"), 1);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&s).unwrap(), v);
    }
}
