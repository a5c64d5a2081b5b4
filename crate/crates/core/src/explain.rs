//! Shapley attributions for any scorer and impurity importance for forests.
//!
//! The value of a coalition `S` is the mean class-`c` probability over the
//! background rows, each with the features in `S` overwritten by the
//! instance's values.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ForestModel, Node};
use crate::error::{Error, Result};
use crate::ingest::{Cohort, Split};
use crate::seed;
use crate::training::Checkpoint;

/// Largest feature count the exact method will enumerate.
pub const MAX_EXACT_FEATURES: usize = 15;
pub const MIN_SAMPLES: usize = 100;
pub const DEFAULT_BACKGROUND: usize = 50;

/// Anything producing class probabilities for a batch of rows.
pub trait Scorer: Sync {
    fn n_features(&self) -> usize;
    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>>;
}

impl Scorer for Checkpoint {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Checkpoint::predict_proba(self, x)
    }
}

impl Scorer for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        ForestModel::predict_proba(self, x)
    }
}

/// Wraps a closure mapping a batch to one score per row, exposed as class 0.
pub struct FnScorer<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(ArrayView1<f64>) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let scores: Vec<f64> = x.rows().into_iter().map(|r| (self.f)(r)).collect();
        Ok(Array2::from_shape_vec((x.nrows(), 1), scores).expect("one column"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethod {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub instance: usize,
    pub class: usize,
    pub method: ShapMethod,
    /// Mean class probability over the background.
    pub base_value: f64,
    /// Class probability of the instance itself.
    pub prediction: f64,
    pub attributions: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    /// `|base + Σφ − prediction|`.
    pub local_accuracy_gap: f64,
}

fn class_scores(model: &dyn Scorer, x: &Array2<f64>, class: usize) -> Result<Vec<f64>> {
    let p = model.predict_proba(x)?;
    if class >= p.ncols() {
        return Err(Error::DimensionMismatch {
            context: "target class".into(),
            expected: p.ncols(),
            found: class,
        });
    }
    Ok(p.column(class).to_vec())
}

fn check_inputs(model: &dyn Scorer, instance: ArrayView1<f64>, background: &Array2<f64>) -> Result<usize> {
    let d = model.n_features();
    if instance.len() != d || background.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "explained feature width".into(),
            expected: d,
            found: if instance.len() != d { instance.len() } else { background.ncols() },
        });
    }
    if background.nrows() == 0 {
        return Err(Error::Empty("background sample has no rows".into()));
    }
    Ok(d)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Exact Shapley values by enumerating all `2^d` coalitions.
pub fn shapley_exact(
    model: &dyn Scorer,
    instance_id: usize,
    instance: ArrayView1<f64>,
    background: &Array2<f64>,
    class: usize,
) -> Result<ShapExplanation> {
    let d = check_inputs(model, instance, background)?;
    if d > MAX_EXACT_FEATURES {
        return Err(Error::EnumerationBound {
            features: d,
            max: MAX_EXACT_FEATURES,
        });
    }
    let values: Vec<f64> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let mut rows = background.clone();
            for j in (0..d).filter(|j| mask >> j & 1 == 1) {
                rows.column_mut(j).fill(instance[j]);
            }
            class_scores(model, &rows, class).map(|s| mean(&s))
        })
        .collect::<Result<_>>()?;
    // weight of a coalition of size s not containing j: s!(d−s−1)!/d!
    let weights: Vec<f64> = (0..d)
        .map(|s| {
            let mut w = 1.0 / d as f64;
            for i in 1..=s {
                w *= i as f64 / (d - i) as f64;
            }
            w
        })
        .collect();
    let mut phi = vec![0.0; d];
    for (j, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        let mut total = 0.0;
        for mask in (0..1usize << d).filter(|m| m & bit == 0) {
            total += weights[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
        }
        *slot = total;
    }
    let base = values[0];
    let prediction = values[(1 << d) - 1];
    Ok(ShapExplanation {
        instance: instance_id,
        class,
        method: ShapMethod::Exact,
        base_value: base,
        prediction,
        local_accuracy_gap: (base + phi.iter().sum::<f64>() - prediction).abs(),
        attributions: phi,
        std_errors: None,
        n_samples: None,
        seed: None,
    })
}

/// Monte Carlo Shapley values from `n_samples` random feature orderings.
/// Sample `s` starts from background row `s mod B`.
pub fn shapley_sampled(
    model: &dyn Scorer,
    instance_id: usize,
    instance: ArrayView1<f64>,
    background: &Array2<f64>,
    class: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    let d = check_inputs(model, instance, background)?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "sampled Shapley needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let b = background.nrows();
    let contributions: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::rng(seed::derive(seed, seed::STREAM_BACKGROUND), s as u64);
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(&mut rng);
            let mut rows = Array2::zeros((d + 1, d));
            let mut current: Array1<f64> = background.row(s % b).to_owned();
            rows.row_mut(0).assign(&current);
            for (step, &j) in order.iter().enumerate() {
                current[j] = instance[j];
                rows.row_mut(step + 1).assign(&current);
            }
            let scores = class_scores(model, &rows, class)?;
            let mut marginal = vec![0.0; d];
            for (step, &j) in order.iter().enumerate() {
                marginal[j] = scores[step + 1] - scores[step];
            }
            Ok(marginal)
        })
        .collect::<Result<_>>()?;
    let n = n_samples as f64;
    let mut phi = vec![0.0; d];
    let mut se = vec![0.0; d];
    for j in 0..d {
        let m = contributions.iter().map(|c| c[j]).sum::<f64>() / n;
        let var = contributions.iter().map(|c| (c[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        phi[j] = m;
        se[j] = (var / n).sqrt();
    }
    let base = mean(&class_scores(model, background, class)?);
    let prediction = class_scores(model, &instance.to_owned().insert_axis(Axis(0)), class)?[0];
    Ok(ShapExplanation {
        instance: instance_id,
        class,
        method: ShapMethod::Sampled,
        base_value: base,
        prediction,
        local_accuracy_gap: (base + phi.iter().sum::<f64>() - prediction).abs(),
        attributions: phi,
        std_errors: Some(se),
        n_samples: Some(n_samples),
        seed: Some(seed),
    })
}

/// Up to `n` seeded train rows, without replacement, in cohort order.
pub fn background_sample(cohort: &Cohort, n: usize, seed: u64) -> Result<Array2<f64>> {
    let train = cohort.rows(Split::Train);
    if train.is_empty() {
        return Err(Error::Empty("no train rows for the background sample".into()));
    }
    let mut rng = seed::rng(seed, seed::STREAM_BACKGROUND);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, train.len(), n.min(train.len()))
        .into_iter()
        .map(|i| train[i])
        .collect();
    picked.sort_unstable();
    Ok(cohort.select_x(&picked))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniImportance {
    pub scores: Vec<f64>,
    pub normalized: bool,
    /// Set when normalisation was requested but no tree has a split.
    pub normalization_skipped: bool,
}

/// `I_j = Σ_trees Σ_{splits on j} (n_node / n_root) · Δi`, optionally scaled to sum 1.
pub fn gini_importance(model: &ForestModel, normalize: bool) -> GiniImportance {
    let mut scores = vec![0.0; model.n_features];
    for tree in &model.trees {
        let root = tree.nodes[0].n_samples() as f64;
        for node in &tree.nodes {
            if let Node::Split {
                feature,
                impurity_decrease,
                n_samples,
                ..
            } = node
            {
                scores[*feature] += *n_samples as f64 / root * impurity_decrease;
            }
        }
    }
    let total: f64 = scores.iter().sum();
    let mut normalized = false;
    let mut normalization_skipped = false;
    if normalize {
        if total > 0.0 {
            scores.iter_mut().for_each(|s| *s /= total);
            normalized = true;
        } else {
            log::warn!("forest has no splits; importance left unnormalised");
            normalization_skipped = true;
        }
    }
    GiniImportance {
        scores,
        normalized,
        normalization_skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    pub score: f64,
}

/// Features by descending score, ties by lower index, truncated to `top_n`.
pub fn rank_report(scores: &[f64], names: &[String], top_n: usize) -> Result<Vec<RankedFeature>> {
    if scores.is_empty() {
        return Err(Error::Empty("no scores to rank".into()));
    }
    if names.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "feature names".into(),
            expected: scores.len(),
            found: names.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(r, i)| RankedFeature {
            rank: r + 1,
            index: i,
            name: names[i].clone(),
            score: scores[i],
        })
        .collect())
}

pub fn ranking_csv(ranks: &[RankedFeature]) -> String {
    let mut out = String::from("rank,feature,index,score\n");
    for r in ranks {
        let _ = writeln!(out, "{},{},{},{}", r.rank, r.name, r.index, r.score);
    }
    out
}
