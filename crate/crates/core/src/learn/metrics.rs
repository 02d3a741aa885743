use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(y_true: &[u8], y_pred: &[u8]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} labels vs {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut c = Confusion::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t != 0, p != 0) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gmean: f64,
    pub fpr: f64,
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Metrics from counts. Ratios with an empty denominator are 0, so F1
    /// is 0 when nothing is predicted positive.
    pub fn from_confusion(c: Confusion) -> Self {
        let recall = ratio(c.tp, c.tp + c.fn_);
        let fpr = ratio(c.fp, c.fp + c.tn);
        Metrics {
            precision: ratio(c.tp, c.tp + c.fp),
            recall,
            f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
            gmean: (recall * (1.0 - fpr)).sqrt(),
            fpr,
            confusion: c,
        }
    }
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    Ok(Metrics::from_confusion(Confusion::from_predictions(y_true, y_pred)?))
}

/// Predicts positive when `score >= threshold`.
pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

pub fn compute_metrics_scored(y_true: &[u8], scores: &[f64], threshold: f64) -> Result<Metrics> {
    compute_metrics(y_true, &apply_threshold(scores, threshold))
}
