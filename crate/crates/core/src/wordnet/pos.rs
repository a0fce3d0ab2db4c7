use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// WordNet part of speech. Adjective satellites are folded into `Adjective`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Verb,
    Adjective,
    Adverb,
}

impl PosTag {
    /// Fixed order used for tie-breaking.
    pub const ALL: [PosTag; 4] = [PosTag::Noun, PosTag::Verb, PosTag::Adjective, PosTag::Adverb];

    /// Suffix of the `index.*`, `data.*` and `*.exc` files.
    pub fn file_suffix(self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Adjective => "adj",
            PosTag::Adverb => "adv",
        }
    }

    pub fn key(self) -> char {
        match self {
            PosTag::Noun => 'n',
            PosTag::Verb => 'v',
            PosTag::Adjective => 'a',
            PosTag::Adverb => 'r',
        }
    }

    /// Parses a file key; `s` (adjective satellite) maps to `Adjective`.
    pub fn from_key(key: &str) -> Option<Self> {
        match key {
            "n" => Some(PosTag::Noun),
            "v" => Some(PosTag::Verb),
            "a" | "s" => Some(PosTag::Adjective),
            "r" => Some(PosTag::Adverb),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PosTag::Noun => "noun",
            PosTag::Verb => "verb",
            PosTag::Adjective => "adjective",
            PosTag::Adverb => "adverb",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noun" => Ok(PosTag::Noun),
            "verb" => Ok(PosTag::Verb),
            "adjective" | "adj" => Ok(PosTag::Adjective),
            "adverb" | "adv" => Ok(PosTag::Adverb),
            other => PosTag::from_key(other).ok_or_else(|| format!("unknown part of speech {other:?}")),
        }
    }
}
