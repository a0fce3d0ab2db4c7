use super::{GlossLookup, PosTag};
use crate::data::tokenize::{tokenize, truncate_to_tokens};
use crate::data::{Instance, PLACEHOLDER};

pub const DEFAULT_MAX_GLOSSES: usize = 3;
pub const DEFAULT_DEFINITION_BUDGET: usize = 60;

const DETERMINERS: &[&str] = &["the", "a", "an", "his", "her", "its", "their", "this", "these"];

const VERB_CUES: &[&str] = &[
    "to", "will", "would", "can", "could", "may", "might", "has", "have", "had", "is", "are",
    "was", "were",
];

/// Chooses the part of speech under which a candidate's definitions are read.
///
/// Cascade: a preceding determiner or possessive selects noun; a preceding
/// "to" or auxiliary selects verb; an "-ly" word with adverb senses selects
/// adverb; otherwise the tag with the most senses wins, ties going to the
/// earlier of noun, verb, adjective, adverb.
pub fn infer_pos(candidate: &str, option_tokens: &[String], position: usize, lookup: &GlossLookup) -> PosTag {
    let previous = position
        .checked_sub(1)
        .and_then(|i| option_tokens.get(i))
        .map(String::as_str);
    if let Some(prev) = previous {
        if DETERMINERS.contains(&prev) {
            return PosTag::Noun;
        }
        if VERB_CUES.contains(&prev) {
            return PosTag::Verb;
        }
    }
    let word = candidate.trim().to_lowercase();
    if word.ends_with("ly") && !lookup.senses(&word, PosTag::Adverb).is_empty() {
        return PosTag::Adverb;
    }
    let mut best = PosTag::Noun;
    let mut best_count = 0;
    for pos in PosTag::ALL {
        let count = lookup.senses(&word, pos).len();
        if count > best_count {
            best = pos;
            best_count = count;
        }
    }
    best
}

/// The first `max_glosses` glosses of `candidate` under `pos`, joined with
/// `"; "` and cut to `budget` tokens. Empty when there are no senses.
pub fn build_definition_text(
    candidate: &str,
    pos: PosTag,
    lookup: &GlossLookup,
    max_glosses: usize,
    budget: usize,
) -> String {
    let glosses = lookup.senses(candidate, pos);
    let joined = glosses
        .iter()
        .take(max_glosses.max(1))
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("; ");
    truncate_to_tokens(&joined, budget).to_string()
}

/// Copy of `instance` with a definition and a part of speech per candidate.
/// The candidate's position in its option is where the placeholder was.
pub fn enrich_instance(instance: &Instance, lookup: &GlossLookup, max_glosses: usize, budget: usize) -> Instance {
    let before = instance.question.split(PLACEHOLDER).next().unwrap_or("");
    let position = tokenize(before).len();
    let mut definitions = Vec::with_capacity(instance.candidates.len());
    let mut tags = Vec::with_capacity(instance.candidates.len());
    for candidate in &instance.candidates {
        let option = instance.question.replacen(PLACEHOLDER, candidate, 1);
        let pos = infer_pos(candidate, &tokenize(&option), position, lookup);
        definitions.push(build_definition_text(candidate, pos, lookup, max_glosses, budget));
        tags.push(pos);
    }
    Instance {
        definitions: Some(definitions),
        pos: Some(tags),
        ..instance.clone()
    }
}
