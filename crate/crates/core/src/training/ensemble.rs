use super::{Result, TrainError};

/// Per-instance majority vote over several models' predicted indices.
///
/// Ties go to the tied index that appears first in model order.
pub fn majority_vote(predictions: &[Vec<usize>]) -> Result<Vec<usize>> {
    let first = predictions
        .first()
        .ok_or_else(|| TrainError::Invalid("majority vote needs at least one model".into()))?;
    if let Some((k, p)) = predictions.iter().enumerate().find(|(_, p)| p.len() != first.len()) {
        return Err(TrainError::Invalid(format!(
            "model {k} has {} predictions, model 0 has {}",
            p.len(),
            first.len()
        )));
    }
    Ok((0..first.len())
        .map(|i| {
            let votes: Vec<usize> = predictions.iter().map(|p| p[i]).collect();
            let count = |c: usize| votes.iter().filter(|&&v| v == c).count();
            let top = votes.iter().map(|&v| count(v)).max().expect("at least one vote");
            *votes.iter().find(|&&v| count(v) == top).expect("a vote reaches the top count")
        })
        .collect())
}
