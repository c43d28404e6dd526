use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification metrics over a labelled evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub num_samples: usize,
    pub weighted_f1: f64,
    pub top1_accuracy: f64,
    /// Absent when only hard predictions are available.
    pub top3_accuracy: Option<f64>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub support: Vec<u64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Per true class, samples with no usable prediction (counted as misses).
    #[serde(default)]
    pub unparsed: Vec<u64>,
}

/// Position of `class` when scores are sorted descending, lower index first on ties.
pub fn rank_of(scores: &[f32], class: usize) -> usize {
    let s = scores[class];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < class))
        .count()
}

/// Highest-scoring class, lowest index on ties.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = j;
        }
    }
    best
}

/// Metrics from per-sample score rows (`num_classes` columns each).
pub fn compute_metrics<S: AsRef<[f32]>>(y_true: &[usize], scores: &[S], num_classes: usize) -> Result<MetricReport> {
    if y_true.len() != scores.len() {
        return Err(Error::validation(format!("{} labels but {} score rows", y_true.len(), scores.len())));
    }
    for (i, row) in scores.iter().enumerate() {
        if row.as_ref().len() != num_classes {
            return Err(Error::validation(format!(
                "score row {i} has {} columns, expected {num_classes}",
                row.as_ref().len()
            )));
        }
    }
    let preds: Vec<usize> = scores.iter().map(|r| argmax(r.as_ref())).collect();
    let mut report = metrics_from_predictions(y_true, &preds, num_classes)?;
    if !y_true.is_empty() {
        let hits = y_true.iter().zip(scores).filter(|(&t, r)| rank_of(r.as_ref(), t) < 3).count();
        report.top3_accuracy = Some(hits as f64 / y_true.len() as f64);
    }
    Ok(report)
}

/// Metrics from hard predictions; top-3 accuracy is not defined.
pub fn metrics_from_predictions(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<MetricReport> {
    let preds: Vec<Option<usize>> = y_pred.iter().copied().map(Some).collect();
    metrics_with_misses(y_true, &preds, num_classes)
}

/// Like [`metrics_from_predictions`], with `None` for a sample that produced no
/// usable prediction. Such samples count against recall and accuracy but not against
/// any class's precision.
pub fn metrics_with_misses(y_true: &[usize], y_pred: &[Option<usize>], num_classes: usize) -> Result<MetricReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::validation(format!("{} labels but {} predictions", y_true.len(), y_pred.len())));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred.iter().flatten()).find(|&&c| c >= num_classes) {
        return Err(Error::validation(format!("class {bad} outside 0..{num_classes}")));
    }
    let n = y_true.len();
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    let mut unparsed = vec![0u64; num_classes];
    for (&t, p) in y_true.iter().zip(y_pred) {
        match p {
            Some(p) => confusion[t][*p] += 1,
            None => unparsed[t] += 1,
        }
    }
    let support: Vec<u64> = confusion.iter().zip(&unparsed).map(|(row, u)| row.iter().sum::<u64>() + u).collect();
    let predicted: Vec<u64> = (0..num_classes).map(|c| confusion.iter().map(|row| row[c]).sum()).collect();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..num_classes).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..num_classes).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = (0..num_classes)
        .map(|c| {
            let (p, r) = (precision[c], recall[c]);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
    let weighted_f1 = if n == 0 {
        0.0
    } else {
        (0..num_classes).map(|c| f1[c] * support[c] as f64).sum::<f64>() / n as f64
    };
    Ok(MetricReport {
        num_samples: n,
        weighted_f1,
        top1_accuracy: ratio(correct, n as u64),
        top3_accuracy: None,
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        support,
        confusion,
        unparsed,
    })
}
