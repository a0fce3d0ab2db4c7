use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::vocab::{Vocabulary, CLS_ID, PAD_ID, SEP_ID};
use super::{DataError, Instance};

/// Fixed-length encoder input for one option:
/// `[CLS] passage [SEP] option definition [SEP] [PAD]…`.
///
/// Token types are 0 up to and including the first `[SEP]`, 1 for the
/// option-definition segment and its closing `[SEP]`, and 0 on padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub token_ids: Vec<u32>,
    pub token_type_ids: Vec<u8>,
    pub attention_mask: Vec<bool>,
}

/// Positions of the special tokens in a canonical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub first_sep: usize,
    pub second_sep: usize,
}

impl Layout {
    pub fn passage_len(&self) -> usize {
        self.first_sep - 1
    }

    pub fn option_len(&self) -> usize {
        self.second_sep - self.first_sep - 1
    }
}

impl ModelInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Validates the special-token layout and returns the `[SEP]` positions.
    pub fn layout(&self) -> Result<Layout, DataError> {
        let bad = |m: &str| DataError::Layout(m.to_string());
        let n = self.token_ids.len();
        if self.token_type_ids.len() != n || self.attention_mask.len() != n {
            return Err(bad("ids, types and mask differ in length"));
        }
        if self.token_ids.first() != Some(&CLS_ID) {
            return Err(bad("first position is not [CLS]"));
        }
        if self.token_ids[1..].contains(&CLS_ID) {
            return Err(bad("more than one [CLS]"));
        }
        let seps: Vec<usize> = (0..n).filter(|&i| self.token_ids[i] == SEP_ID).collect();
        let [first_sep, second_sep] = seps[..] else {
            return Err(bad("expected exactly two [SEP]"));
        };
        if first_sep < 2 || second_sep < first_sep + 2 {
            return Err(bad("empty passage or option segment"));
        }
        for i in 0..n {
            let is_pad = i > second_sep;
            if is_pad != (self.token_ids[i] == PAD_ID) || self.attention_mask[i] == is_pad {
                return Err(bad("padding and attention mask disagree"));
            }
            let expected_type = u8::from(i > first_sep && i <= second_sep);
            if self.token_type_ids[i] != expected_type {
                return Err(bad("token types do not match segments"));
            }
        }
        Ok(Layout {
            first_sep,
            second_sep,
        })
    }
}

/// Numbers of passage, option and definition tokens kept within the budget.
///
/// When everything does not fit, the option-definition segment is first
/// limited to half the content budget (or whatever the passage leaves free,
/// if more), trimming definition tokens before option tokens; the passage
/// then keeps its head.
pub fn truncation_plan(passage: usize, option: usize, definition: usize, content_budget: usize) -> (usize, usize, usize) {
    let second = option + definition;
    if passage + second <= content_budget {
        return (passage, option, definition);
    }
    let half = content_budget / 2;
    let second_keep = second.min(half.max(content_budget.saturating_sub(passage)));
    let passage_keep = passage.min(content_budget - second_keep);
    let option_keep = option.min(second_keep);
    (passage_keep, option_keep, second_keep - option_keep)
}

pub fn assemble_input(
    passage_tokens: &[String],
    option_tokens: &[String],
    definition_tokens: &[String],
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<ModelInput, DataError> {
    if max_seq_len < 5 {
        return Err(DataError::Budget(format!(
            "max_seq_len {max_seq_len} cannot hold [CLS], one passage token, [SEP], one option token and [SEP]"
        )));
    }
    if option_tokens.is_empty() {
        return Err(DataError::Validation("option has no tokens".into()));
    }
    if passage_tokens.is_empty() {
        return Err(DataError::Validation("passage has no tokens".into()));
    }
    let (p, o, d) = truncation_plan(
        passage_tokens.len(),
        option_tokens.len(),
        definition_tokens.len(),
        max_seq_len - 3,
    );
    let mut token_ids = Vec::with_capacity(max_seq_len);
    token_ids.push(CLS_ID);
    token_ids.extend(vocab.encode(&passage_tokens[..p]));
    token_ids.push(SEP_ID);
    let first_sep = token_ids.len() - 1;
    token_ids.extend(vocab.encode(&option_tokens[..o]));
    token_ids.extend(vocab.encode(&definition_tokens[..d]));
    token_ids.push(SEP_ID);
    let used = token_ids.len();
    token_ids.resize(max_seq_len, PAD_ID);

    let token_type_ids = (0..max_seq_len)
        .map(|i| u8::from(i > first_sep && i < used))
        .collect();
    let attention_mask = (0..max_seq_len).map(|i| i < used).collect();
    Ok(ModelInput {
        token_ids,
        token_type_ids,
        attention_mask,
    })
}

/// The five per-option inputs of an instance. Passage segments agree except
/// where a long option segment forces a shorter passage head.
pub fn instance_inputs(
    instance: &Instance,
    vocab: &Vocabulary,
    max_seq_len: usize,
    use_definitions: bool,
) -> Result<Vec<ModelInput>, DataError> {
    let passage = tokenize(&instance.passage);
    instance
        .options()?
        .iter()
        .enumerate()
        .map(|(j, option)| {
            let definition = if use_definitions {
                tokenize(instance.definition(j))
            } else {
                Vec::new()
            };
            assemble_input(&passage, &tokenize(option), &definition, vocab, max_seq_len)
        })
        .collect()
}
