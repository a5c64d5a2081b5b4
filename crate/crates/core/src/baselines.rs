//! Reference models: a CART random forest and the plain single-head network.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Cohort, Split};
use crate::seed;
use crate::training::{TrainingConfig, Variant};

/// Smallest impurity decrease that counts as a split.
pub const MIN_IMPURITY_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(m) => m,
            MaxFeatures::Fraction(f) => (f * d as f64).round() as usize,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        /// Class counts of the training samples reaching the leaf.
        histogram: Vec<usize>,
        n_samples: usize,
        impurity: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// `i(parent) − (n_l/n) i(left) − (n_r/n) i(right)`, always positive.
        impurity_decrease: f64,
        n_samples: usize,
        impurity: f64,
    },
}

impl Node {
    pub fn n_samples(&self) -> usize {
        match self {
            Node::Leaf { n_samples, .. } | Node::Split { n_samples, .. } => *n_samples,
        }
    }
}

/// Nodes in pre-order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub seed: u64,
}

impl Tree {
    pub fn leaf(&self, row: ArrayView1<f64>) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { histogram, .. } => return histogram,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Normalised leaf histogram for `row`.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> Vec<f64> {
        let h = self.leaf(row);
        let total: usize = h.iter().sum();
        h.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_features: usize,
    pub num_classes: usize,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn histogram(y: &[usize], rows: &[usize], num_classes: usize) -> Vec<usize> {
    let mut h = vec![0; num_classes];
    for &r in rows {
        h[y[r]] += 1;
    }
    h
}

/// Seed of tree `t`.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    seed::derive(seed::derive(seed, seed::STREAM_FOREST), t as u64)
}

/// Bootstrap rows of a tree, regenerable from its seed.
pub fn bootstrap_rows(n: usize, tree_seed: u64, bootstrap: bool) -> Vec<usize> {
    if !bootstrap {
        return (0..n).collect();
    }
    let mut rng = seed::rng(tree_seed, seed::STREAM_BOOTSTRAP);
    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    rows.sort_unstable();
    rows
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn best_split_on(
    x: &Array2<f64>,
    y: &[usize],
    rows: &[usize],
    feature: usize,
    parent: &[usize],
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]));
    let n = sorted.len();
    let parent_gini = gini(parent);
    let mut left = vec![0usize; parent.len()];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left[y[sorted[i]]] += 1;
        let (lo, hi) = (x[[sorted[i], feature]], x[[sorted[i + 1], feature]]);
        if lo == hi {
            continue;
        }
        let n_left = i + 1;
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right: Vec<usize> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        let decrease = parent_gini
            - (n_left as f64 / n as f64) * gini(&left)
            - ((n - n_left) as f64 / n as f64) * gini(&right);
        if best.is_none_or(|(d, _)| decrease > d) {
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            best = Some((decrease, threshold));
        }
    }
    best
}

fn fit_tree(x: &Array2<f64>, y: &[usize], num_classes: usize, config: &ForestConfig, seed: u64) -> Tree {
    let mut rng = seed::rng(seed, seed::STREAM_FOREST);
    let rows = bootstrap_rows(x.nrows(), seed, config.bootstrap);
    let d = x.ncols();
    let m = config.max_features.resolve(d);
    let min_leaf = config.min_samples_leaf.max(1);
    let mut nodes: Vec<Node> = Vec::new();
    // (rows, depth, slot to patch in the parent)
    type Pending = (Vec<usize>, usize, Option<(usize, bool)>);
    let mut stack: Vec<Pending> = vec![(rows, 0, None)];
    while let Some((rows, depth, parent)) = stack.pop() {
        let hist = histogram(y, &rows, num_classes);
        let impurity = gini(&hist);
        let index = nodes.len();
        if let Some((p, is_left)) = parent {
            if let Node::Split { left, right, .. } = &mut nodes[p] {
                *(if is_left { left } else { right }) = index;
            }
        }
        let can_split = impurity > 0.0
            && rows.len() >= 2 * min_leaf
            && config.max_depth.is_none_or(|max| depth < max);
        let mut best: Option<BestSplit> = None;
        if can_split {
            let mut features: Vec<usize> = (0..d).collect();
            features.shuffle(&mut rng);
            let mut tried = 0;
            for f in features {
                if tried >= m {
                    break;
                }
                let first = x[[rows[0], f]];
                if rows.iter().all(|&r| x[[r, f]] == first) {
                    // constant here; does not use up the feature budget
                    continue;
                }
                tried += 1;
                if let Some((decrease, threshold)) = best_split_on(x, y, &rows, f, &hist, min_leaf) {
                    if decrease > MIN_IMPURITY_DECREASE && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                        best = Some(BestSplit {
                            feature: f,
                            threshold,
                            decrease,
                            left: Vec::new(),
                            right: Vec::new(),
                        });
                    }
                }
            }
        }
        match best {
            Some(mut split) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, split.feature]] <= split.threshold);
                split.left = l;
                split.right = r;
                nodes.push(Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: 0,
                    right: 0,
                    impurity_decrease: split.decrease,
                    n_samples: rows.len(),
                    impurity,
                });
                // right pushed first so the left subtree is laid out next
                stack.push((split.right, depth + 1, Some((index, false))));
                stack.push((split.left, depth + 1, Some((index, true))));
            }
            None => nodes.push(Node::Leaf {
                histogram: hist,
                n_samples: rows.len(),
                impurity,
            }),
        }
    }
    Tree { nodes, seed }
}

/// Fits a forest on `x`, `y`. Trees are independent and fitted in parallel.
pub fn forest_fit(x: &Array2<f64>, y: &[usize], num_classes: usize, config: &ForestConfig) -> Result<ForestModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "forest labels".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("no rows to fit the forest on".into()));
    }
    if num_classes < 2 {
        return Err(Error::InvalidConfig("a forest needs at least two classes".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    if let Some(&c) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::DimensionMismatch {
            context: "class label".into(),
            expected: num_classes,
            found: c,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest features".into()));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(x, y, num_classes, config, tree_seed(config.seed, t)))
        .collect();
    Ok(ForestModel {
        config: config.clone(),
        n_features: x.ncols(),
        num_classes,
        feature_names: (0..x.ncols()).map(|j| format!("x{j}")).collect(),
        trees,
    })
}

/// Fits on the cohort's train rows and keeps its feature names.
pub fn forest_fit_cohort(cohort: &Cohort, config: &ForestConfig) -> Result<ForestModel> {
    let rows = cohort.rows(Split::Train);
    let mut model = forest_fit(&cohort.select_x(&rows), &cohort.select_y(&rows), cohort.num_classes(), config)?;
    model.feature_names = cohort.feature_names().to_vec();
    Ok(model)
}

/// Mean of the per-tree normalised leaf histograms.
pub fn forest_predict_proba(model: &ForestModel, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            context: "forest feature width".into(),
            expected: model.n_features,
            found: x.ncols(),
        });
    }
    let rows: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row| {
            let mut acc = vec![0.0; model.num_classes];
            for tree in &model.trees {
                for (a, p) in acc.iter_mut().zip(tree.predict_row(row)) {
                    *a += p;
                }
            }
            acc.iter().map(|v| v / model.trees.len() as f64).collect()
        })
        .collect();
    Ok(Array2::from_shape_fn((x.nrows(), model.num_classes), |(i, c)| rows[i][c]))
}

impl ForestModel {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        forest_predict_proba(self, x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// The plain single-head network baseline: the routed network without task heads.
pub fn plain_network_config(base: &TrainingConfig) -> TrainingConfig {
    Variant::NoTaskHeads.apply(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn threshold_data() -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| match j {
            0 => i as f64,
            1 => ((i * 7) % 5) as f64,
            _ => ((i * 3) % 11) as f64,
        });
        let y = (0..40).map(|i| usize::from(i >= 20)).collect();
        (x, y)
    }

    #[test]
    fn single_feature_determines_label() {
        let (x, y) = threshold_data();
        let config = ForestConfig {
            n_trees: 20,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let model = forest_fit(&x, &y, 2, &config).unwrap();
        let proba = model.predict_proba(&x).unwrap();
        let pred: Vec<usize> = proba.rows().into_iter().map(|r| usize::from(r[1] > r[0])).collect();
        assert_eq!(pred, y);
    }

    #[test]
    fn pure_labels_give_single_leaves() {
        let (x, _) = threshold_data();
        let model = forest_fit(&x, &[1; 40], 2, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert!(model.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn leaf_histogram_gives_probabilities() {
        let model = ForestModel {
            config: ForestConfig::default(),
            n_features: 2,
            num_classes: 4,
            feature_names: vec!["a".into(), "b".into()],
            trees: vec![Tree {
                nodes: vec![Node::Leaf {
                    histogram: vec![3, 1, 0, 0],
                    n_samples: 4,
                    impurity: gini(&[3, 1, 0, 0]),
                }],
                seed: 0,
            }],
        };
        let p = model.predict_proba(&array![[0.0, 1.0], [5.0, -2.0]]).unwrap();
        assert_eq!(p, array![[0.75, 0.25, 0.0, 0.0], [0.75, 0.25, 0.0, 0.0]]);
        assert!(model.predict_proba(&array![[0.0]]).is_err());
    }

    #[test]
    fn splits_always_reduce_impurity() {
        let (x, y) = threshold_data();
        let y: Vec<usize> = y.iter().enumerate().map(|(i, &c)| if i % 7 == 0 { 1 - c } else { c }).collect();
        let model = forest_fit(&x, &y, 2, &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        for tree in &model.trees {
            for node in &tree.nodes {
                if let Node::Split {
                    impurity_decrease,
                    left,
                    right,
                    n_samples,
                    impurity,
                    ..
                } = node
                {
                    assert!(*impurity_decrease > 0.0);
                    let child = |i: usize| match &tree.nodes[i] {
                        Node::Leaf { impurity, n_samples, .. } | Node::Split { impurity, n_samples, .. } => {
                            *impurity * *n_samples as f64
                        }
                    };
                    assert!((child(*left) + child(*right)) / *n_samples as f64 <= *impurity + 1e-12);
                    assert!(tree.nodes[*left].n_samples() >= 2 && tree.nodes[*right].n_samples() >= 2);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_depth_limited() {
        let (x, y) = threshold_data();
        let config = ForestConfig {
            n_trees: 4,
            max_depth: Some(1),
            seed: 9,
            ..Default::default()
        };
        let a = forest_fit(&x, &y, 2, &config).unwrap();
        assert_eq!(a, forest_fit(&x, &y, 2, &config).unwrap());
        assert!(a.trees.iter().all(|t| t.depth() <= 1));
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(16), 4);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Fraction(0.5).resolve(10), 5);
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
    }
}
