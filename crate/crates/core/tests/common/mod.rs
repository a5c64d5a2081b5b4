//! Independent reference implementations shared by the integration tests and
//! the acceptance harness.

#![allow(dead_code)]

use fairmtl::baselines::{bootstrap_rows, gini, tree_seed, ForestModel, Node};
use fairmtl::fairmtl::{FairMtlParams, Mode, ModelShape};
use fairmtl::training::{data_loss, gradients, head_penalty, Batch, SubgroupWeights};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

// ---- fairness -------------------------------------------------------------

pub struct BruteGap {
    pub dp: f64,
    pub eo: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
}

fn spread(rates: &[f64]) -> f64 {
    if rates.len() < 2 {
        return 0.0;
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[sorted.len() - 1] - sorted[0]
}

/// Filters rows group by group and counts.
pub fn brute_gap(y: &[usize], pred: &[usize], groups: &[usize], num_groups: usize, class: usize) -> BruteGap {
    let mut positive = Vec::new();
    let mut tprs = Vec::new();
    let mut fprs = Vec::new();
    for g in 0..num_groups {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        if members.is_empty() {
            continue;
        }
        let predicted = members.iter().filter(|&&i| pred[i] == class).count();
        positive.push(predicted as f64 / members.len() as f64);
        let pos: Vec<usize> = members.iter().copied().filter(|&i| y[i] == class).collect();
        let neg: Vec<usize> = members.iter().copied().filter(|&i| y[i] != class).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        tprs.push(pos.iter().filter(|&&i| pred[i] == class).count() as f64 / pos.len() as f64);
        fprs.push(neg.iter().filter(|&&i| pred[i] == class).count() as f64 / neg.len() as f64);
    }
    let tpr_gap = spread(&tprs);
    let fpr_gap = spread(&fprs);
    BruteGap {
        dp: spread(&positive),
        eo: tpr_gap.max(fpr_gap),
        tpr_gap,
        fpr_gap,
    }
}

pub struct Fixture {
    pub y: Vec<usize>,
    pub pred: Vec<usize>,
    pub groups: Vec<usize>,
    pub num_groups: usize,
    pub num_classes: usize,
}

/// Random labels, predictions and group codes; some declared groups may be
/// empty and some classes absent.
pub fn random_fixture(seed: u64) -> Fixture {
    let mut r = rng(seed);
    let n = r.random_range(1..=1000);
    let num_classes = r.random_range(2..=5);
    let num_groups = r.random_range(2..=6);
    let used_groups = r.random_range(1..=num_groups);
    let skew: f64 = r.random_range(0.0..1.0);
    let y: Vec<usize> = (0..n).map(|_| r.random_range(0..num_classes)).collect();
    let pred = y
        .iter()
        .map(|&c| if r.random_bool(skew) { c } else { r.random_range(0..num_classes) })
        .collect();
    let groups = (0..n).map(|_| r.random_range(0..used_groups)).collect();
    Fixture {
        y,
        pred,
        groups,
        num_groups,
        num_classes,
    }
}

// ---- gradients ------------------------------------------------------------

/// Objective under `mode` with dropout off; training mode uses batch statistics.
pub fn objective(params: &FairMtlParams, batch: Batch, weights: &SubgroupWeights, lambda: f64, mode: Mode) -> f64 {
    let pass = params.forward_pass(batch.x, batch.z, mode, None).expect("forward");
    data_loss(&pass.probs, batch.y, batch.z, weights) + lambda * head_penalty(params)
}

pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose ±h interval straddles a ReLU kink, when skipping is on.
    pub kinks: usize,
}

/// Compares analytic gradients against central differences for every parameter.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn finite_difference_check(
    params: &FairMtlParams,
    batch: Batch,
    weights: &SubgroupWeights,
    lambda: f64,
    mode: Mode,
    h: f64,
    floor: f64,
) -> GradientCheck {
    fd_check(params, batch, weights, lambda, mode, h, floor, false)
}

/// Same check, leaving out parameters whose perturbation crosses a kink.
pub fn finite_difference_check_smooth(
    params: &FairMtlParams,
    batch: Batch,
    weights: &SubgroupWeights,
    lambda: f64,
    mode: Mode,
    h: f64,
    floor: f64,
) -> GradientCheck {
    fd_check(params, batch, weights, lambda, mode, h, floor, true)
}

#[allow(clippy::too_many_arguments)]
fn fd_check(
    params: &FairMtlParams,
    batch: Batch,
    weights: &SubgroupWeights,
    lambda: f64,
    mode: Mode,
    h: f64,
    floor: f64,
    skip_kinks: bool,
) -> GradientCheck {
    let analytic = gradients(params, batch, weights, lambda, mode, None).expect("gradients");
    let analytic: Vec<Vec<f64>> = analytic.grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut kinks = 0;
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.trainable()[t][i];
            probe.trainable_mut()[t][i] = original + h;
            let up = objective(&probe, batch, weights, lambda, mode);
            probe.trainable_mut()[t][i] = original - h;
            let down = objective(&probe, batch, weights, lambda, mode);
            probe.trainable_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * h);
            if skip_kinks {
                // a smooth objective gives the same slope at a tenth of the step
                let fine = h / 10.0;
                probe.trainable_mut()[t][i] = original + fine;
                let up = objective(&probe, batch, weights, lambda, mode);
                probe.trainable_mut()[t][i] = original - fine;
                let down = objective(&probe, batch, weights, lambda, mode);
                probe.trainable_mut()[t][i] = original;
                let refined = (up - down) / (2.0 * fine);
                if (refined - numeric).abs() / refined.abs().max(numeric.abs()).max(floor) > 1e-5 {
                    kinks += 1;
                    continue;
                }
            }
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
            checked += 1;
        }
    }
    GradientCheck {
        max_relative_error: worst,
        checked,
        kinks,
    }
}

/// Two hidden layers, K = 2, C = 4, dropout off, with perturbed batch-norm
/// state and biases so both normalisation paths are exercised.
pub fn desk_network(shared_encoder: bool, seed: u64) -> FairMtlParams {
    let mut shape = ModelShape::new(5, &[7, 6], 2, 4, 0.0);
    shape.head_hidden = 5;
    shape.shared_encoder = shared_encoder;
    let mut params = FairMtlParams::init(shape, seed).expect("init");
    let mut r = rng(seed ^ 0xbeef);
    for e in &mut params.encoders {
        for b in &mut e.blocks {
            b.norm.gamma.mapv_inplace(|_| r.random_range(0.5..1.5));
            b.norm.beta.mapv_inplace(|_| r.random_range(-0.5..0.5));
            b.norm.running_mean.mapv_inplace(|_| r.random_range(-0.3..0.3));
            b.norm.running_var.mapv_inplace(|_| r.random_range(0.5..2.0));
            b.dense.bias.mapv_inplace(|_| r.random_range(-0.2..0.2));
        }
    }
    // zero biases put dead rows exactly on the ReLU kink
    for h in &mut params.heads {
        h.hidden.bias.mapv_inplace(|_| r.random_range(-0.2..0.2));
        h.output.bias.mapv_inplace(|_| r.random_range(-0.2..0.2));
    }
    params
}

pub struct GradientFixture {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
}

pub fn gradient_fixture(rows: usize, seed: u64) -> GradientFixture {
    let mut r = rng(seed);
    let x = gaussian_matrix(rows, 5, &mut r);
    let y = (0..rows).map(|i| i % 4).collect();
    let z = (0..rows).map(|i| if i % 3 == 0 { 2 } else { 1 }).collect();
    GradientFixture { x, y, z }
}

// ---- forests --------------------------------------------------------------

fn class_counts(rows: &[usize], y: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &r in rows {
        counts[y[r]] += 1;
    }
    counts
}

/// Re-derives every split's weighted impurity decrease by sending the tree's
/// bootstrap sample down the stored thresholds.
pub fn gini_oracle(model: &ForestModel, x: &Array2<f64>, y: &[usize]) -> Vec<f64> {
    let mut scores = vec![0.0; model.n_features];
    for (t, tree) in model.trees.iter().enumerate() {
        let sample = bootstrap_rows(x.nrows(), tree_seed(model.config.seed, t), model.config.bootstrap);
        let root = sample.len() as f64;
        let mut stack = vec![(0usize, sample)];
        while let Some((node, rows)) = stack.pop() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = &tree.nodes[node]
            {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, *feature]] <= *threshold);
                let n = rows.len() as f64;
                let decrease = gini(&class_counts(&rows, y, model.num_classes))
                    - l.len() as f64 / n * gini(&class_counts(&l, y, model.num_classes))
                    - r.len() as f64 / n * gini(&class_counts(&r, y, model.num_classes));
                scores[*feature] += n / root * decrease;
                stack.push((*left, l));
                stack.push((*right, r));
            }
        }
    }
    scores
}

/// Averages per-tree leaf frequencies found by walking the nodes by hand.
pub fn forest_oracle_proba(model: &ForestModel, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), model.num_classes));
    for (i, row) in x.rows().into_iter().enumerate() {
        for tree in &model.trees {
            let mut node = 0;
            let histogram = loop {
                match &tree.nodes[node] {
                    Node::Leaf { histogram, .. } => break histogram,
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => node = if row[*feature] <= *threshold { *left } else { *right },
                }
            };
            let total: usize = histogram.iter().sum();
            for (c, &count) in histogram.iter().enumerate() {
                out[[i, c]] += count as f64 / total as f64 / model.trees.len() as f64;
            }
        }
    }
    out
}

/// Two interleaved half circles with Gaussian jitter; label 1 is the lower moon.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t: f64 = r.random_range(0.0..std::f64::consts::PI);
        let (a, b, label) = if i % 2 == 0 {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        let ja: f64 = StandardNormal.sample(&mut r);
        let jb: f64 = StandardNormal.sample(&mut r);
        x[[i, 0]] = a + noise * ja;
        x[[i, 1]] = b + noise * jb;
        y.push(label);
    }
    (x, y)
}

// ---- statistics -----------------------------------------------------------

/// Two-sided Student-t p-value for odd degrees of freedom from the closed-form
/// trigonometric series of the CDF.
pub fn student_t_two_sided_odd(t: f64, df: usize) -> f64 {
    assert!(df % 2 == 1, "closed form needs odd df");
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let mut series = 0.0;
    if df > 1 {
        let mut term = c;
        series = term;
        let mut k = 3;
        while k <= df - 2 {
            term *= (k - 1) as f64 / k as f64 * c * c;
            series += term;
            k += 2;
        }
    }
    let inside = 2.0 / std::f64::consts::PI * (theta + s * series);
    1.0 - inside
}

/// Thirty paired scores with a small, noisy shift.
pub fn paired_fixture() -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..30).map(|i| 0.20 + 0.03 * ((i as f64) * 0.7).sin()).collect();
    let b: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(i, v)| v - 0.004 + 0.01 * ((i as f64) * 1.3).cos())
        .collect();
    (a, b)
}

/// Hand computation of the paired statistic: mean, sample sd, t = mean / (sd/√n).
pub fn paired_t_by_hand(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let ss: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    (mean, mean / (sd / n.sqrt()))
}
