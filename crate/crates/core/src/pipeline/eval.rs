use serde::{Deserialize, Serialize};

use super::artifacts::Stamp;
use super::Method;
use crate::demographics::Task;
use crate::error::{Error, Result};
use crate::split::stratified_split;

/// Stratified split of labeled users. Returns positions into `labels`,
/// both sides ascending.
pub fn split_ground_truth(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    stratified_split(labels, fraction, seed)
}

/// Accuracy of one assignment on the validation nodes it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub q: f64,
    /// Nodes that received a label.
    pub assigned: usize,
    /// `assigned / prediction population`.
    pub coverage: f64,
    /// Validation nodes that received a label.
    pub validation_assigned: usize,
    pub correct: usize,
    /// `correct / validation_assigned`; `None` when nothing was assigned.
    pub accuracy: Option<f64>,
    /// Category shares over all assigned nodes.
    pub predicted_distribution: Vec<f64>,
    /// `confusion[true][predicted]` over assigned validation nodes.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stamp: Stamp,
    pub task: Task,
    pub method: Method,
    pub categories: Vec<String>,
    pub denominator: String,
    pub prediction_population: usize,
    pub validation_size: usize,
    /// Validation nodes per true category.
    pub validation_counts: Vec<usize>,
    pub rows: Vec<EvalRow>,
}

pub const DENOMINATOR: &str = "validation nodes that received a label at this q";

/// Scores `assigned` (one entry per prediction-population row) against
/// `validation` pairs of `(row, true category)`.
pub fn evaluate_accuracy(
    q: f64,
    assigned: &[Option<usize>],
    validation: &[(usize, usize)],
    classes: usize,
) -> Result<EvalRow> {
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut predicted = vec![0usize; classes];
    for &c in assigned.iter().flatten() {
        *predicted
            .get_mut(c)
            .ok_or_else(|| Error::domain(format!("category {c} outside 0..{classes}")))? += 1;
    }
    let mut covered = 0;
    let mut correct = 0;
    for &(row, truth) in validation {
        let slot = assigned
            .get(row)
            .ok_or_else(|| Error::domain(format!("validation row {row} outside the prediction population")))?;
        if truth >= classes {
            return Err(Error::domain(format!("category {truth} outside 0..{classes}")));
        }
        if let Some(p) = *slot {
            covered += 1;
            correct += usize::from(p == truth);
            confusion[truth][p] += 1;
        }
    }
    let total: usize = predicted.iter().sum();
    Ok(EvalRow {
        q,
        assigned: total,
        coverage: if assigned.is_empty() {
            0.0
        } else {
            total as f64 / assigned.len() as f64
        },
        validation_assigned: covered,
        correct,
        accuracy: (covered > 0).then(|| correct as f64 / covered as f64),
        predicted_distribution: predicted
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_and_wrong_assignments() {
        let validation: Vec<(usize, usize)> = (0..6).map(|i| (i, i % 3)).collect();
        let exact: Vec<Option<usize>> = (0..6).map(|i| Some(i % 3)).collect();
        let row = evaluate_accuracy(1.0, &exact, &validation, 3).unwrap();
        assert_eq!(row.accuracy, Some(1.0));
        assert_eq!(row.confusion, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        let wrong: Vec<Option<usize>> = (0..6).map(|i| Some((i + 1) % 3)).collect();
        assert_eq!(evaluate_accuracy(1.0, &wrong, &validation, 3).unwrap().accuracy, Some(0.0));
    }

    #[test]
    fn nothing_assigned_is_undefined() {
        let row = evaluate_accuracy(0.125, &[None, None, Some(1)], &[(0, 1), (1, 0)], 2).unwrap();
        assert_eq!(row.accuracy, None);
        assert_eq!(row.assigned, 1);
        assert_eq!(row.validation_assigned, 0);
    }

    #[test]
    fn confusion_rows_match_validation_counts() {
        let validation = [(0, 0), (1, 0), (2, 1), (4, 1), (5, 1)];
        let assigned = [Some(0), Some(1), Some(1), None, Some(0), Some(1)];
        let row = evaluate_accuracy(1.0, &assigned, &validation, 2).unwrap();
        let sums: Vec<u64> = row.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![2, 3]);
        assert_eq!(row.correct, 3);
        assert_eq!(row.coverage, 5.0 / 6.0);
    }

    #[test]
    fn random_guessing_over_four_groups() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let validation: Vec<(usize, usize)> = (0..n).map(|i| (i, rng.gen_range(0..4))).collect();
        let assigned: Vec<Option<usize>> = (0..n).map(|_| Some(rng.gen_range(0..4))).collect();
        let acc = evaluate_accuracy(1.0, &assigned, &validation, 4).unwrap().accuracy.unwrap();
        // binomial sd is about 0.0022
        assert!((acc - 0.25).abs() < 0.01, "{acc}");
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 3 == 0)).collect();
        let (a, b) = split_ground_truth(&labels, 0.7, 5).unwrap();
        assert_eq!((a.len(), b.len()), (70, 30));
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(split_ground_truth(&labels, 0.7, 5).unwrap(), (a, b));
        assert!(split_ground_truth(&[0, 0, 1], 0.7, 1).is_err());
    }
}
