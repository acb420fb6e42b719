//! Confusion matrices and per-class precision, recall and F1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[Label]) -> Self {
        let k = classes.len();
        Self {
            classes: classes.to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    /// Builds a matrix directly from a count table.
    pub fn from_counts(classes: &[Label], counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(format!("count table is not {k}×{k}")));
        }
        Ok(Self {
            classes: classes.to_vec(),
            counts,
        })
    }

    fn index_of(&self, label: Label) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or(Error::UnknownLabel(label))
    }

    pub fn record(&mut self, truth: Label, pred: Label) -> Result<()> {
        let (i, j) = (self.index_of(truth)?, self.index_of(pred)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Entry-wise sum; both matrices must share the class list.
    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::InvalidInput("confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Merges classes through `map`; the result lists the distinct mapped
    /// labels in ascending order.
    pub fn map_classes(&self, map: impl Fn(Label) -> Result<Label>) -> Result<ConfusionMatrix> {
        let mapped: Vec<Label> = self.classes.iter().map(|&c| map(c)).collect::<Result<_>>()?;
        let mut classes = mapped.clone();
        classes.sort_unstable();
        classes.dedup();
        let mut out = ConfusionMatrix::zeros(&classes);
        for (i, &ti) in mapped.iter().enumerate() {
            let a = out.index_of(ti)?;
            for (j, &pj) in mapped.iter().enumerate() {
                let b = out.index_of(pj)?;
                out.counts[a][b] += self.counts[i][j];
            }
        }
        Ok(out)
    }
}

/// Tallies `truth` against `pred` over the ordered class list.
pub fn confusion_matrix(truth: &[Label], pred: &[Label], classes: &[Label]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Number of predictions of this class.
    pub predicted: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class. Zero denominators yield 0.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> BTreeMap<Label, ClassMetrics> {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    cm.classes
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let tp = cm.counts[k][k];
            let precision = ratio(tp, cols[k]);
            let recall = ratio(tp, rows[k]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (
                label,
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: rows[k],
                    predicted: cols[k],
                },
            )
        })
        .collect()
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Unweighted mean F1 over classes that occur in truth or prediction.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let present: Vec<f64> = per_class_metrics(cm)
        .values()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .map(|m| m.f1)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix() {
        let cm = confusion_matrix(&[1, 2, 3], &[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        assert_eq!(macro_f1(&cm).unwrap(), 1.0);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let cm = confusion_matrix(&[], &[], &[1, 2]).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(accuracy(&cm), Err(Error::EmptyMatrix)));
        assert!(matches!(macro_f1(&cm), Err(Error::EmptyMatrix)));
        assert!(confusion_matrix(&[1], &[1, 2], &[1, 2]).is_err());
        assert!(matches!(confusion_matrix(&[1], &[7], &[1, 2]), Err(Error::UnknownLabel(7))));
    }

    #[test]
    fn absent_class_has_zero_metrics_and_is_excluded() {
        let cm = confusion_matrix(&[1, 1, 2, 2], &[1, 2, 2, 2], &[1, 2, 3]).unwrap();
        let m = per_class_metrics(&cm);
        assert_eq!(m[&3], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0, predicted: 0 });
        let f1_1 = m[&1].f1;
        let f1_2 = m[&2].f1;
        assert!((macro_f1(&cm).unwrap() - (f1_1 + f1_2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn predicted_only_class_counts_in_macro() {
        // Class 3 never true but predicted once: F1 = 0 and it is included.
        let cm = confusion_matrix(&[1, 2], &[1, 3], &[1, 2, 3]).unwrap();
        assert!((macro_f1(&cm).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn map_classes_merges_cells() {
        let cm = ConfusionMatrix::from_counts(&[1, 2, 3], vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]).unwrap();
        let merged = cm.map_classes(|c| Ok(if c <= 2 { 1 } else { 2 })).unwrap();
        assert_eq!(merged.classes, vec![1, 2]);
        assert_eq!(merged.counts, vec![vec![12, 9], vec![15, 9]]);
        assert_eq!(merged.total(), cm.total());
    }

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
