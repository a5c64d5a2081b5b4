//! Bootstrap confidence intervals and the paired t-test.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::seed;

pub const MIN_RESAMPLES: usize = 100;
/// Attempts per resample before it is dropped as undefined.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// Draws thrown away because the metric was undefined on them.
    pub redrawn: usize,
    /// Resamples abandoned after `MAX_REDRAWS` undefined draws.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws<T> {
    pub values: Vec<T>,
    pub redrawn: usize,
    pub dropped: usize,
}

/// Row indices of resample `index`, drawn with replacement.
pub fn resample_indices(n_rows: usize, seed: u64, index: u64, attempt: u64) -> Vec<usize> {
    let stream = seed::derive(seed::derive(seed, seed::STREAM_BOOTSTRAP), index);
    let mut rng = seed::rng(stream, attempt);
    (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect()
}

/// Evaluates `metric` on `n_resamples` seeded resamples. Undefined draws are
/// redrawn; results are ordered by resample index regardless of scheduling.
pub fn bootstrap_draws<T, F>(metric: F, n_rows: usize, n_resamples: usize, seed: u64) -> Result<BootstrapDraws<T>>
where
    T: Send,
    F: Fn(&[usize]) -> Option<T> + Sync,
{
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {n_resamples}"
        )));
    }
    if n_rows == 0 {
        return Err(Error::Empty("bootstrap over zero rows".into()));
    }
    let outcomes: Vec<(Option<T>, usize)> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|index| {
            for attempt in 0..MAX_REDRAWS as u64 {
                if let Some(v) = metric(&resample_indices(n_rows, seed, index, attempt)) {
                    return (Some(v), attempt as usize);
                }
            }
            (None, MAX_REDRAWS)
        })
        .collect();
    let mut draws = BootstrapDraws {
        values: Vec::with_capacity(n_resamples),
        redrawn: 0,
        dropped: 0,
    };
    for (value, redrawn) in outcomes {
        draws.redrawn += redrawn;
        match value {
            Some(v) => draws.values.push(v),
            None => draws.dropped += 1,
        }
    }
    if draws.values.is_empty() {
        return Err(Error::NonFinite("metric undefined on every bootstrap resample".into()));
    }
    if draws.dropped > 0 {
        log::warn!("{} bootstrap resamples dropped as undefined", draws.dropped);
    }
    Ok(draws)
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval for `metric`. The point estimate is the metric on all
/// rows; the interval is widened if needed so that it contains the point.
pub fn bootstrap_ci<F>(metric: F, n_rows: usize, level: f64, n_resamples: usize, seed: u64) -> Result<ConfidenceInterval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must be in (0, 1), got {level}")));
    }
    let all: Vec<usize> = (0..n_rows).collect();
    let point = metric(&all).ok_or_else(|| Error::NonFinite("metric undefined on the full sample".into()))?;
    let draws = bootstrap_draws(&metric, n_rows, n_resamples, seed)?;
    let mut sorted = draws.values;
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        point,
        lower: quantile(&sorted, alpha).min(point),
        upper: quantile(&sorted, 1.0 - alpha).max(point),
        level,
        n_resamples,
        seed,
        redrawn: draws.redrawn,
        dropped: draws.dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// Mean of `b − a`.
    pub mean_difference: f64,
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub zero_variance: bool,
}

/// Paired t-test on `b − a` with a two-sided p-value from Student's t with
/// `n − 1` degrees of freedom.
pub fn paired_bootstrap_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired series".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let scale = mean.abs().max(1.0);
    if var.sqrt() <= 1e-12 * scale {
        let significant = mean.abs() > 1e-12 * scale;
        log::warn!("paired differences have zero variance");
        return Ok(PairedTTest {
            mean_difference: mean,
            t: if significant { f64::INFINITY.copysign(mean) } else { 0.0 },
            p: if significant { 0.0 } else { 1.0 },
            df,
            zero_variance: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest {
        mean_difference: mean,
        t,
        p,
        df,
        zero_variance: false,
    })
}
