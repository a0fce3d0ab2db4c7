//! Rule-based word tokenizer.
//!
//! Text is lowercased and split on whitespace; within a chunk, runs of
//! letters and runs of digits form tokens and every other character is a
//! token of its own.

use std::ops::Range;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Digit,
    Other,
}

fn classify(c: char) -> Class {
    if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Digit
    } else {
        Class::Other
    }
}

/// Byte ranges of the tokens in `text`, before lowercasing.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, Class)> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some((start, _)) = current.take() {
                spans.push(start..i);
            }
            continue;
        }
        let class = classify(c);
        match current {
            Some((_, prev)) if prev == class && class != Class::Other => {}
            Some((start, _)) => {
                spans.push(start..i);
                current = Some((i, class));
            }
            None => current = Some((i, class)),
        }
    }
    if let Some((start, _)) = current {
        spans.push(start..text.len());
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

/// The prefix of `text` that contains at most `budget` tokens, with
/// trailing whitespace removed.
pub fn truncate_to_tokens(text: &str, budget: usize) -> &str {
    let spans = token_spans(text);
    if spans.len() <= budget {
        return text;
    }
    match budget {
        0 => "",
        n => &text[..spans[n - 1].end],
    }
}
