use crate::scalar::Scalar;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecallError {
    #[error("empty ground truth")]
    EmptyTruth,
    #[error("{predictions} predictions for {truth} truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("truth label at index {0} is not among the classes")]
    UnknownClass(usize),
}

/// Unweighted mean of per-class recall `TP / (TP + FN)` over the classes
/// that occur in `truth`.
pub fn macro_recall<L: Ord, F: Scalar>(
    predictions: &[L],
    truth: &[L],
    classes: &[L],
) -> Result<F, RecallError> {
    if truth.is_empty() {
        return Err(RecallError::EmptyTruth);
    }
    if predictions.len() != truth.len() {
        return Err(RecallError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    // class -> (tp, tp + fn)
    let mut counts: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    for (i, (p, t)) in predictions.iter().zip(truth).enumerate() {
        if !classes.contains(t) {
            return Err(RecallError::UnknownClass(i));
        }
        let e = counts.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    let sum: F = counts
        .values()
        .map(|&(tp, total)| F::from_count(tp) / F::from_count(total))
        .sum();
    Ok(sum / F::from_count(counts.len()))
}
