use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::instance::PLACEHOLDER;
use super::tokenize::tokenize;
use super::{DataError, Instance};

/// Corpus summary in the layout of the shared-task statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub count: usize,
    pub avg_passage_len: f64,
    /// Question length with the placeholder counted as one token.
    pub avg_question_len: f64,
    /// Distinct passage and question tokens.
    pub vocab_size: usize,
    /// Distinct lowercased candidate answers.
    pub answer_vocab_size: usize,
}

pub fn dataset_stats(instances: &[Instance]) -> Result<DatasetStats, DataError> {
    if instances.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let mut vocab = BTreeSet::new();
    let mut answers = BTreeSet::new();
    let (mut passage_total, mut question_total) = (0usize, 0usize);
    for inst in instances {
        let passage = tokenize(&inst.passage);
        passage_total += passage.len();
        let question: Vec<String> = inst
            .question
            .split(PLACEHOLDER)
            .flat_map(tokenize)
            .collect();
        question_total += question.len() + inst.question.matches(PLACEHOLDER).count();
        vocab.extend(passage);
        vocab.extend(question);
        answers.extend(inst.candidates.iter().map(|c| c.trim().to_lowercase()));
    }
    let n = instances.len() as f64;
    Ok(DatasetStats {
        count: instances.len(),
        avg_passage_len: passage_total as f64 / n,
        avg_question_len: question_total as f64 / n,
        vocab_size: vocab.len(),
        answer_vocab_size: answers.len(),
    })
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str =
        "split,count,avg_passage_len,avg_question_len,vocab_size,answer_vocab_size";

    pub fn csv_row(&self, split: &str) -> String {
        format!(
            "{split},{},{:.1},{:.1},{},{}",
            self.count, self.avg_passage_len, self.avg_question_len, self.vocab_size, self.answer_vocab_size
        )
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24}{:>10}", "Instances", self.count)?;
        writeln!(f, "{:<24}{:>10.1}", "Avg. passage length", self.avg_passage_len)?;
        writeln!(f, "{:<24}{:>10.1}", "Avg. question length", self.avg_question_len)?;
        writeln!(f, "{:<24}{:>10}", "Vocabulary size", self.vocab_size)?;
        write!(f, "{:<24}{:>10}", "Answer vocabulary size", self.answer_vocab_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(passage: &str, question: &str) -> Instance {
        Instance {
            id: "x".into(),
            passage: passage.into(),
            question: question.into(),
            candidates: ["a", "b", "c", "d", "A"].iter().map(|s| s.to_string()).collect(),
            label: Some(0),
            definitions: None,
            pos: None,
        }
    }

    #[test]
    fn singleton_mean() {
        let s = dataset_stats(&[inst("one two three four five six seven eight nine ten", "It is @placeholder .")]).unwrap();
        assert_eq!(s.count, 1);
        assert_eq!(s.avg_passage_len, 10.0);
        assert_eq!(s.avg_question_len, 4.0);
        assert_eq!(s.answer_vocab_size, 4);
    }

    #[test]
    fn empty_is_error() {
        assert!(dataset_stats(&[]).is_err());
    }
}
