//! Binary classification metrics from a confusion matrix.
//!
//! Predictions at or above 0.5 count as positive. Macro-F1 is the unweighted
//! mean of the per-class F1 scores, with any zero-denominator rate treated
//! as zero.

use serde::{Deserialize, Serialize};

use crate::NumericError;

/// Confusion counts plus the derived rates. Everything is recomputable from
/// the four counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    #[serde(rename = "acc")]
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Positive-class precision.
    pub precision: f64,
    /// Positive-class recall.
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

pub const POSITIVE_THRESHOLD: f64 = 0.5;

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    safe_div(2.0 * precision * recall, precision + recall)
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let total = (tp + fp + fn_ + tn) as f64;
        let precision = safe_div(tp as f64, (tp + fp) as f64);
        let recall = safe_div(tp as f64, (tp + fn_) as f64);
        // Negative class, with roles mirrored.
        let neg_precision = safe_div(tn as f64, (tn + fn_) as f64);
        let neg_recall = safe_div(tn as f64, (tn + fp) as f64);
        EvalMetrics {
            accuracy: safe_div((tp + tn) as f64, total),
            macro_f1: 0.5 * (f1(precision, recall) + f1(neg_precision, neg_recall)),
            precision,
            recall,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    /// Threshold predictions at 0.5 and tally against 0/1 labels.
    pub fn from_predictions(preds: &[f64], labels: &[u8]) -> Result<Self, NumericError> {
        if preds.is_empty() {
            return Err(NumericError::Contract {
                op: "evaluate",
                msg: "dataset must be non-empty".to_string(),
            });
        }
        if preds.len() != labels.len() {
            return Err(NumericError::Contract {
                op: "evaluate",
                msg: format!("{} predictions vs {} labels", preds.len(), labels.len()),
            });
        }
        let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
        for (&p, &y) in preds.iter().zip(labels) {
            let positive = p >= POSITIVE_THRESHOLD;
            match (positive, y) {
                (true, 1) => tp += 1,
                (true, 0) => fp += 1,
                (false, 1) => fn_ += 1,
                (false, 0) => tn += 1,
                _ => {
                    return Err(NumericError::Contract {
                        op: "evaluate",
                        msg: format!("label {y} is not 0 or 1"),
                    })
                }
            }
        }
        Ok(EvalMetrics::from_counts(tp, fp, fn_, tn))
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::fmt::Display for EvalMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "acc {:.4}  macro_f1 {:.4}  precision {:.4}  recall {:.4}  (tp {} fp {} fn {} tn {})",
            self.accuracy, self.macro_f1, self.precision, self.recall,
            self.tp, self.fp, self.fn_, self.tn
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = EvalMetrics::from_predictions(&[0.9, 0.1, 0.8, 0.2], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn balanced_confusion_gives_all_halves() {
        let m = EvalMetrics::from_counts(1, 1, 1, 1);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.macro_f1, 0.5);
    }

    #[test]
    fn all_positive_on_imbalanced_set() {
        // 20:80 positives to negatives, everything predicted positive.
        let preds = vec![0.9; 10];
        let labels = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        let m = EvalMetrics::from_predictions(&preds, &labels).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 0.2).abs() < 1e-15);
        assert!((m.accuracy - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_division_goes_to_zero() {
        // Nothing predicted positive, nothing actually positive in preds.
        let m = EvalMetrics::from_counts(0, 0, 3, 2);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert!(m.macro_f1 > 0.0); // negative class still scores
    }

    #[test]
    fn threshold_is_inclusive_at_half() {
        let m = EvalMetrics::from_predictions(&[0.5], &[1]).unwrap();
        assert_eq!(m.tp, 1);
    }

    #[test]
    fn counts_sum_to_n_and_rates_recompute() {
        let m = EvalMetrics::from_predictions(&[0.9, 0.9, 0.1, 0.2, 0.7], &[1, 0, 1, 0, 1]).unwrap();
        assert_eq!(m.total(), 5);
        let again = EvalMetrics::from_counts(m.tp, m.fp, m.fn_, m.tn);
        assert_eq!(m, again);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        assert!(EvalMetrics::from_predictions(&[], &[]).is_err());
        assert!(EvalMetrics::from_predictions(&[0.5], &[1, 0]).is_err());
        assert!(EvalMetrics::from_predictions(&[0.5], &[2]).is_err());
    }
}
