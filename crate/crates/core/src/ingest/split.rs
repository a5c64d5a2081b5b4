//! Stratified train/val/test assignment.
//!
//! Quotas are apportioned so that split totals match `round(N · ratio)`
//! (largest remainder) and every class lands within one row of its exact
//! share in every split. Rows inside a class are taken in seeded shuffle order.

use rand::seq::SliceRandom;

use super::cohort::{Cohort, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ratios = Self { train, val, test };
        ratios.validate()?;
        Ok(ratios)
    }

    fn as_array(self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|&v| v.is_nan() || v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("split ratios must be positive, got {r:?}")));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must sum to 1, got {r:?}")));
        }
        Ok(())
    }
}

/// Largest-remainder rounding of `total · weights`; ties go to the lower index.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Per-class split quotas `quota[class][split]`.
fn class_quotas(class_sizes: &[usize], ratios: [f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = class_sizes.iter().sum();
    let targets = apportion(total, &ratios);
    let mut quotas: Vec<[usize; 3]> = class_sizes
        .iter()
        .map(|&n| std::array::from_fn(|s| (n as f64 * ratios[s]).floor() as usize))
        .collect();
    let mut deficit: Vec<isize> = (0..3)
        .map(|s| targets[s] as isize - quotas.iter().map(|q| q[s] as isize).sum::<isize>())
        .collect();
    let residual: Vec<usize> = class_sizes
        .iter()
        .zip(&quotas)
        .map(|(&n, q)| n - q.iter().sum::<usize>())
        .collect();

    // Each leftover row of a class goes to a distinct split, preferring the
    // split with the largest remaining deficit, then the largest fractional share.
    let mut class_order: Vec<usize> = (0..class_sizes.len()).collect();
    class_order.sort_by(|&a, &b| residual[b].cmp(&residual[a]).then(a.cmp(&b)));
    for c in class_order {
        let n = class_sizes[c] as f64;
        let mut splits: Vec<usize> = (0..3).collect();
        splits.sort_by(|&a, &b| {
            let fa = n * ratios[a] - (n * ratios[a]).floor();
            let fb = n * ratios[b] - (n * ratios[b]).floor();
            deficit[b]
                .cmp(&deficit[a])
                .then(fb.partial_cmp(&fa).unwrap())
                .then(a.cmp(&b))
        });
        for &s in splits.iter().take(residual[c]) {
            quotas[c][s] += 1;
            deficit[s] -= 1;
        }
    }
    quotas
}

/// Reassigns split tags per class and refits standardization on the new train rows.
pub fn stratified_split(cohort: &Cohort, ratios: SplitRatios, seed: u64) -> Result<Cohort> {
    ratios.validate()?;
    let classes = cohort.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &label) in cohort.y().iter().enumerate() {
        by_class[label].push(i);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if !rows.is_empty() && rows.len() < 3 {
            return Err(Error::TooFewRows {
                class,
                rows: rows.len(),
                splits: 3,
            });
        }
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quotas = class_quotas(&sizes, ratios.as_array());

    let mut rng = seed::rng(seed, seed::STREAM_SPLIT);
    let mut tags = vec![Split::Train; cohort.len()];
    for (rows, quota) in by_class.iter_mut().zip(&quotas) {
        rows.shuffle(&mut rng);
        let mut cursor = 0;
        for (split, &count) in Split::ALL.iter().zip(quota) {
            for &row in &rows[cursor..cursor + count] {
                tags[row] = *split;
            }
            cursor += count;
        }
    }
    let split = cohort.with_split(tags)?;
    split.check_train_classes()?;
    Ok(split)
}
