use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Macro-averaged F1 with per-class detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
    /// Classes absent from both predictions and truth; their F1 counts as 0.
    pub empty_classes: Vec<usize>,
}

fn check(pred: &[usize], truth: &[usize], k: usize) {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    assert!(pred.iter().chain(truth).all(|&v| v < k), "label outside [0, {k})");
}

/// Per-class F1 averaged over all `k` classes.
///
/// A class that never occurs in `truth` or `pred` scores 0 and is listed in
/// [`F1Report::empty_classes`] with a logged warning.
///
/// # Panics
/// If lengths differ or a label is `>= k`.
pub fn f1_report(pred: &[usize], truth: &[usize], k: usize) -> F1Report {
    check(pred, truth, k);
    let cm = confusion_matrix(pred, truth, k);
    let mut per_class = Vec::with_capacity(k);
    let mut empty = Vec::new();
    for c in 0..k {
        let tp = cm[c][c] as f64;
        let actual: usize = cm[c].iter().sum();
        let predicted: usize = cm.iter().map(|row| row[c]).sum();
        if actual == 0 && predicted == 0 {
            log::warn!("class {c} has no true or predicted samples; its F1 counts as 0");
            empty.push(c);
            per_class.push(0.0);
            continue;
        }
        per_class.push(2.0 * tp / (actual + predicted) as f64);
    }
    F1Report {
        macro_f1: per_class.iter().sum::<f64>() / k as f64,
        per_class,
        empty_classes: empty,
    }
}

pub fn macro_f1(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    f1_report(pred, truth, k).macro_f1
}

/// Counts with true class on rows and predicted class on columns.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<usize>> {
    check(pred, truth, k);
    let mut m = vec![vec![0; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

/// Each row as percentages of its total; empty rows stay zero.
pub fn row_normalized(cm: &[Vec<usize>]) -> Vec<Vec<f64>> {
    cm.iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&v| if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 })
                .collect()
        })
        .collect()
}

/// CSV with a header row of predicted classes and one row per true class.
pub fn confusion_csv(cm: &[Vec<usize>]) -> String {
    let k = cm.len();
    let mut s = String::from("true\\pred");
    for j in 0..k {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for (i, row) in cm.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
