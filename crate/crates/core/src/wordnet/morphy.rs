use std::collections::BTreeMap;
use std::path::Path;

use super::{read_lines, PosTag, WordNetError};

/// Inflected form → base forms, as listed in a `{pos}.exc` file.
pub type Exceptions = BTreeMap<String, Vec<String>>;

const NOUN_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("ies", "y"),
];

const VERB_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
];

const ADJ_RULES: &[(&str, &str)] = &[("er", ""), ("est", ""), ("er", "e"), ("est", "e")];

fn rules(pos: PosTag) -> &'static [(&'static str, &'static str)] {
    match pos {
        PosTag::Noun => NOUN_RULES,
        PosTag::Verb => VERB_RULES,
        PosTag::Adjective => ADJ_RULES,
        PosTag::Adverb => &[],
    }
}

pub fn parse_exception_file(path: &Path) -> Result<Exceptions, WordNetError> {
    let mut map = Exceptions::new();
    for (_, line) in read_lines(path)? {
        let mut fields = line.split_whitespace();
        let Some(inflected) = fields.next() else { continue };
        map.entry(inflected.to_string())
            .or_default()
            .extend(fields.map(String::from));
    }
    Ok(map)
}

/// Candidate lemmas for `word` under `pos` that exist in the index.
///
/// Base forms come first: exception-list entries when the word has one,
/// otherwise suffix-detachment results. The word itself is appended when it
/// is indexed. Results are deduplicated in order.
pub fn morphy(
    word: &str,
    pos: PosTag,
    exceptions: &Exceptions,
    is_indexed: impl Fn(&str) -> bool,
) -> Vec<String> {
    let word = word.trim().to_lowercase().replace(' ', "_");
    let mut candidates: Vec<String> = match exceptions.get(&word) {
        Some(bases) => bases.clone(),
        None => rules(pos)
            .iter()
            .filter_map(|(suffix, ending)| {
                word.strip_suffix(suffix)
                    .filter(|stem| !stem.is_empty())
                    .map(|stem| format!("{stem}{ending}"))
            })
            .collect(),
    };
    candidates.push(word.clone());

    let mut out: Vec<String> = Vec::new();
    for c in candidates {
        if is_indexed(&c) && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}
