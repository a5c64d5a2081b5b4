use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Mean of the defined one-vs-rest AUCs; `None` if no class had both
    /// positives and negatives.
    pub macro_auroc: Option<f64>,
    pub per_class: Vec<ClassScores>,
    pub per_class_auc: Vec<Option<f64>>,
    pub skipped_auc_classes: Vec<usize>,
}

fn check_lengths(y: &[usize], pred: &[usize]) -> Result<()> {
    if y.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions".into(),
            expected: y.len(),
            found: pred.len(),
        });
    }
    Ok(())
}

pub fn accuracy(y: &[usize], pred: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Precision, recall and F1 per class. Undefined ratios (no predictions or no
/// support) count as 0.
pub fn per_class_scores(y: &[usize], pred: &[usize], num_classes: usize) -> Vec<ClassScores> {
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&t, &p) in y.iter().zip(pred) {
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect()
}

/// Unweighted mean F1 over all `num_classes` classes, zero-support classes included as 0.
pub fn macro_f1(y: &[usize], pred: &[usize], num_classes: usize) -> f64 {
    let scores = per_class_scores(y, pred, num_classes);
    scores.iter().map(|s| s.f1).sum::<f64>() / num_classes as f64
}

/// Area under the ROC curve via average ranks, equal to the fraction of
/// (positive, negative) pairs ranked correctly with ties counted ½.
/// `None` without both positives and negatives.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

pub fn classification_metrics(y: &[usize], pred: &[usize], proba: &Array2<f64>) -> Result<OverallMetrics> {
    check_lengths(y, pred)?;
    if proba.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "probability rows".into(),
            expected: y.len(),
            found: proba.nrows(),
        });
    }
    let num_classes = proba.ncols();
    if let Some(&bad) = y.iter().chain(pred).find(|&&c| c >= num_classes) {
        return Err(Error::DimensionMismatch {
            context: "class index".into(),
            expected: num_classes,
            found: bad,
        });
    }
    let per_class = per_class_scores(y, pred, num_classes);
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / num_classes as f64;
    let mut per_class_auc = Vec::with_capacity(num_classes);
    let mut skipped = Vec::new();
    for c in 0..num_classes {
        let positive: Vec<bool> = y.iter().map(|&t| t == c).collect();
        let scores: Vec<f64> = proba.column(c).to_vec();
        let auc = roc_auc(&scores, &positive);
        if auc.is_none() {
            log::warn!("class {c}: AUC undefined without both positives and negatives; skipped");
            skipped.push(c);
        }
        per_class_auc.push(auc);
    }
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let macro_auroc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(OverallMetrics {
        accuracy: accuracy(y, pred),
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        macro_auroc,
        per_class,
        per_class_auc,
        skipped_auc_classes: skipped,
    })
}
