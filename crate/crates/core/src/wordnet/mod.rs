//! WordNet 3.x flat-file parsing and definition lookup for candidate answers.

mod definitions;
mod index;
mod morphy;
mod pos;
mod synset;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use definitions::{build_definition_text, enrich_instance, infer_pos, DEFAULT_DEFINITION_BUDGET, DEFAULT_MAX_GLOSSES};
pub use index::{parse_index_file, parse_index_line, IndexEntry};
pub use morphy::{morphy, parse_exception_file, Exceptions};
pub use pos::PosTag;
pub use synset::{parse_data_file, parse_data_line, split_gloss, SynsetEntry};

/// Environment variables consulted, in order, when no directory is given.
pub const WORDNET_ENV_VARS: [&str; 2] = ["WORDNET_DIR", "WNSEARCHDIR"];

#[derive(Debug, Error)]
pub enum WordNetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Structural {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no WordNet directory given and none of {} is set", WORDNET_ENV_VARS.join(", "))]
    NoDirectory,
}

/// Lines of a file with 1-based line numbers.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, WordNetError> {
    let io_err = |source| WordNetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let bytes = line.map_err(io_err)?;
        // The distribution is ASCII; tolerate stray Latin-1 bytes.
        let text = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
        };
        out.push((i + 1, text.trim_end_matches('\r').to_string()));
    }
    Ok(out)
}

/// Resolves the WordNet root from an explicit path or the environment.
pub fn resolve_dir(explicit: Option<&Path>) -> Result<PathBuf, WordNetError> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    WORDNET_ENV_VARS
        .iter()
        .find_map(|v| std::env::var_os(v).filter(|s| !s.is_empty()))
        .map(PathBuf::from)
        .ok_or(WordNetError::NoDirectory)
}

fn normalize(word: &str) -> String {
    word.trim().to_lowercase().replace(' ', "_")
}

/// Glosses per (lemma, part of speech) in WordNet sense order, plus the
/// exception lists needed to normalize inflected candidates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlossLookup {
    glosses: BTreeMap<(PosTag, String), Vec<String>>,
    exceptions: BTreeMap<PosTag, Exceptions>,
}

impl GlossLookup {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a lemma's glosses directly, in sense order.
    pub fn insert(&mut self, lemma: &str, pos: PosTag, glosses: Vec<String>) {
        self.glosses.insert((pos, normalize(lemma)), glosses);
    }

    pub fn insert_exception(&mut self, pos: PosTag, inflected: &str, bases: Vec<String>) {
        self.exceptions
            .entry(pos)
            .or_default()
            .insert(inflected.to_string(), bases);
    }

    pub fn set_exceptions(&mut self, pos: PosTag, exceptions: Exceptions) {
        self.exceptions.insert(pos, exceptions);
    }

    /// Glosses of an exact lemma; empty when the lemma is not indexed.
    pub fn glosses(&self, lemma: &str, pos: PosTag) -> &[String] {
        self.glosses
            .get(&(pos, normalize(lemma)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, lemma: &str, pos: PosTag) -> bool {
        self.glosses.contains_key(&(pos, normalize(lemma)))
    }

    pub fn morphy(&self, word: &str, pos: PosTag) -> Vec<String> {
        let empty = Exceptions::new();
        let exc = self.exceptions.get(&pos).unwrap_or(&empty);
        morphy(word, pos, exc, |w| self.glosses.contains_key(&(pos, w.to_string())))
    }

    /// Glosses of the first morphy lemma of `word` under `pos`.
    pub fn senses(&self, word: &str, pos: PosTag) -> &[String] {
        self.morphy(word, pos)
            .first()
            .map(|lemma| self.glosses(lemma, pos))
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.glosses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glosses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, PosTag, &[String])> {
        self.glosses
            .iter()
            .map(|((pos, lemma), g)| (lemma.as_str(), *pos, g.as_slice()))
    }
}

/// A parsed WordNet distribution.
#[derive(Debug, Clone)]
pub struct WordNet {
    pub root: PathBuf,
    pub index: BTreeMap<PosTag, Vec<IndexEntry>>,
    pub data: BTreeMap<PosTag, BTreeMap<u64, SynsetEntry>>,
    pub lookup: GlossLookup,
}

impl WordNet {
    /// Reads `index.*`, `data.*` and `*.exc` for all four parts of speech.
    /// Missing exception files are treated as empty lists.
    pub fn load(root: &Path) -> Result<Self, WordNetError> {
        let mut index = BTreeMap::new();
        let mut data = BTreeMap::new();
        let mut lookup = GlossLookup::new();
        for pos in PosTag::ALL {
            let suffix = pos.file_suffix();
            let index_path = root.join(format!("index.{suffix}"));
            let entries = parse_index_file(&index_path)?;
            let synsets = parse_data_file(&root.join(format!("data.{suffix}")))?;
            for entry in &entries {
                let mut glosses = Vec::with_capacity(entry.synset_offsets.len());
                for off in &entry.synset_offsets {
                    let synset = synsets.get(off).ok_or_else(|| WordNetError::Structural {
                        path: index_path.clone(),
                        line: 0,
                        message: format!("{}: offset {off:08} not found in data.{suffix}", entry.lemma),
                    })?;
                    glosses.push(synset.gloss.clone());
                }
                lookup.glosses.insert((pos, entry.lemma.clone()), glosses);
            }
            let exc_path = root.join(format!("{suffix}.exc"));
            if exc_path.exists() {
                lookup.set_exceptions(pos, parse_exception_file(&exc_path)?);
            }
            index.insert(pos, entries);
            data.insert(pos, synsets);
        }
        Ok(Self {
            root: root.to_path_buf(),
            index,
            data,
            lookup,
        })
    }

    pub fn synset(&self, pos: PosTag, offset: u64) -> Option<&SynsetEntry> {
        self.data.get(&pos)?.get(&offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_normalizes_case_and_spaces() {
        let mut l = GlossLookup::new();
        l.insert("ice_cream", PosTag::Noun, vec!["frozen dessert".into()]);
        assert_eq!(l.glosses("Ice Cream", PosTag::Noun), ["frozen dessert"]);
        assert!(l.glosses("ice_cream", PosTag::Verb).is_empty());
    }

    #[test]
    fn senses_follow_morphy() {
        let mut l = GlossLookup::new();
        l.insert("bank", PosTag::Noun, vec!["sloping land".into()]);
        assert_eq!(l.senses("banks", PosTag::Noun), ["sloping land"]);
        assert!(l.senses("banks", PosTag::Verb).is_empty());
    }

    #[test]
    fn explicit_dir_wins() {
        let p = Path::new("/tmp/wn");
        assert_eq!(resolve_dir(Some(p)).unwrap(), p);
    }
}
