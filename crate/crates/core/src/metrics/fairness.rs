//! One-vs-rest group fairness gaps.
//!
//! Group codes are `0..num_groups`. A declared group with no usable rows is
//! left out of the max−min and listed in `excluded`, never turned into NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityGap {
    pub class: usize,
    pub value: f64,
    /// `P(ŷ = c | A = a)`, `None` for excluded groups.
    pub positive_rate: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsGap {
    pub class: usize,
    /// `max(tpr_gap, fpr_gap)`.
    pub value: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
    pub tpr: Vec<Option<f64>>,
    pub fpr: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

fn check(y: Option<&[usize]>, pred: &[usize], groups: &[usize], num_groups: usize) -> Result<()> {
    if groups.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            context: "group codes".into(),
            expected: pred.len(),
            found: groups.len(),
        });
    }
    if let Some(y) = y {
        if y.len() != pred.len() {
            return Err(Error::DimensionMismatch {
                context: "labels".into(),
                expected: pred.len(),
                found: y.len(),
            });
        }
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= num_groups) {
        return Err(Error::DimensionMismatch {
            context: "group code".into(),
            expected: num_groups,
            found: g,
        });
    }
    Ok(())
}

fn spread(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return 0.0;
    }
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn ratio(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Demographic parity difference for class `class`.
pub fn dp_difference(pred: &[usize], groups: &[usize], num_groups: usize, class: usize) -> Result<ParityGap> {
    let gap = dp_gap(pred, groups, num_groups, class)?;
    for g in &gap.excluded {
        log::warn!("group {g} has no rows; excluded from the parity gap for class {class}");
    }
    Ok(gap)
}

/// [`dp_difference`] without exclusion warnings, for resampling loops.
pub(crate) fn dp_gap(pred: &[usize], groups: &[usize], num_groups: usize, class: usize) -> Result<ParityGap> {
    check(None, pred, groups, num_groups)?;
    let mut hits = vec![0usize; num_groups];
    let mut totals = vec![0usize; num_groups];
    for (&p, &g) in pred.iter().zip(groups) {
        totals[g] += 1;
        if p == class {
            hits[g] += 1;
        }
    }
    let positive_rate: Vec<Option<f64>> = (0..num_groups).map(|g| ratio(hits[g], totals[g])).collect();
    let excluded: Vec<usize> = (0..num_groups).filter(|&g| totals[g] == 0).collect();
    Ok(ParityGap {
        class,
        value: spread(&positive_rate),
        positive_rate,
        excluded,
    })
}

/// Equalized odds difference for class `class`. A group needs rows with
/// `y = c` and rows with `y ≠ c` to take part.
pub fn eo_difference(y: &[usize], pred: &[usize], groups: &[usize], num_groups: usize, class: usize) -> Result<OddsGap> {
    let gap = eo_gap(y, pred, groups, num_groups, class)?;
    for g in &gap.excluded {
        log::warn!("group {g} lacks positives or negatives for class {class}; excluded from the odds gap");
    }
    Ok(gap)
}

/// [`eo_difference`] without exclusion warnings.
pub(crate) fn eo_gap(y: &[usize], pred: &[usize], groups: &[usize], num_groups: usize, class: usize) -> Result<OddsGap> {
    check(Some(y), pred, groups, num_groups)?;
    let mut tp = vec![0usize; num_groups];
    let mut pos = vec![0usize; num_groups];
    let mut fp = vec![0usize; num_groups];
    let mut neg = vec![0usize; num_groups];
    for ((&t, &p), &g) in y.iter().zip(pred).zip(groups) {
        if t == class {
            pos[g] += 1;
            tp[g] += usize::from(p == class);
        } else {
            neg[g] += 1;
            fp[g] += usize::from(p == class);
        }
    }
    let mut excluded = Vec::new();
    let mut tpr = Vec::with_capacity(num_groups);
    let mut fpr = Vec::with_capacity(num_groups);
    for g in 0..num_groups {
        if pos[g] == 0 || neg[g] == 0 {
            excluded.push(g);
            tpr.push(None);
            fpr.push(None);
        } else {
            tpr.push(ratio(tp[g], pos[g]));
            fpr.push(ratio(fp[g], neg[g]));
        }
    }
    let tpr_gap = spread(&tpr);
    let fpr_gap = spread(&fpr);
    Ok(OddsGap {
        class,
        value: tpr_gap.max(fpr_gap),
        tpr_gap,
        fpr_gap,
        tpr,
        fpr,
        excluded,
    })
}

/// Per-group mean over classes of one-vs-rest accuracy; `None` for empty groups.
pub fn subgroup_accuracy(
    y: &[usize],
    pred: &[usize],
    groups: &[usize],
    num_groups: usize,
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    check(Some(y), pred, groups, num_groups)?;
    let mut correct = vec![vec![0usize; num_classes]; num_groups];
    let mut totals = vec![0usize; num_groups];
    for ((&t, &p), &g) in y.iter().zip(pred).zip(groups) {
        totals[g] += 1;
        for (c, slot) in correct[g].iter_mut().enumerate() {
            if (t == c) == (p == c) {
                *slot += 1;
            }
        }
    }
    Ok((0..num_groups)
        .map(|g| {
            if totals[g] == 0 {
                log::warn!("group {g} has no rows; subgroup accuracy omitted");
                return None;
            }
            let sum: f64 = correct[g].iter().map(|&c| c as f64 / totals[g] as f64).sum();
            Some(sum / num_classes as f64)
        })
        .collect())
}
