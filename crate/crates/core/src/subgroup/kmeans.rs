//! Lloyd's k-means with k-means++ seeding.
//!
//! Labels are 1-based (`1..=K`). Nearest-centroid ties resolve to the lowest
//! centroid index. A cluster that empties during an iteration is re-seeded at
//! the point farthest from its current centroid.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupAssignment {
    pub k: usize,
    pub centroids: Array2<f64>,
    /// Cluster label per fitted row, in `1..=k`.
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the seeded centroids.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns 1-based nearest-centroid labels and per-point squared distances.
fn assign_points(points: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = squared_distance(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            (best + 1, best_d)
        })
        .unzip()
}

fn kmeans_plus_plus<R: Rng>(points: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| squared_distance(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                cumulative += d;
                if d > 0.0 && target < cumulative {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target past the last positive weight
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

/// Fits `k` clusters to the rows of `points`.
pub fn kmeans_fit(points: &Array2<f64>, k: usize, max_iters: usize, seed: u64) -> Result<SubgroupAssignment> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds the {n} available points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut rng = seed::rng(seed, seed::STREAM_KMEANS);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let (mut labels, mut distances) = assign_points(points, &centroids);
    let mut inertia_trace = vec![distances.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (p, &label) in points.rows().into_iter().zip(&labels) {
            let mut row = sums.row_mut(label - 1);
            row += &p;
            counts[label - 1] += 1;
        }
        let mut reseeded = Vec::new();
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = &sums.row(j) / count as f64;
                centroids.row_mut(j).assign(&mean);
            } else {
                let far = (0..n)
                    .filter(|i| !reseeded.contains(i))
                    .max_by(|&a, &b| distances[a].partial_cmp(&distances[b]).unwrap().then(b.cmp(&a)))
                    .expect("k <= n");
                log::debug!("k-means: cluster {} empty, re-seeded at point {far}", j + 1);
                centroids.row_mut(j).assign(&points.row(far));
                reseeded.push(far);
            }
        }
        let (next_labels, next_distances) = assign_points(points, &centroids);
        inertia_trace.push(next_distances.iter().sum());
        let unchanged = next_labels == labels;
        labels = next_labels;
        distances = next_distances;
        if unchanged && reseeded.is_empty() {
            converged = true;
            break;
        }
    }

    Ok(SubgroupAssignment {
        k,
        centroids,
        labels,
        inertia: *inertia_trace.last().expect("trace is non-empty"),
        inertia_trace,
        iterations,
        converged,
    })
}

impl SubgroupAssignment {
    /// Nearest-centroid labels (1-based) for already embedded rows.
    pub fn nearest(&self, embedded: &Array2<f64>) -> Result<Vec<usize>> {
        if embedded.ncols() != self.centroids.ncols() {
            return Err(Error::DimensionMismatch {
                context: "embedding width".into(),
                expected: self.centroids.ncols(),
                found: embedded.ncols(),
            });
        }
        Ok(assign_points(embedded, &self.centroids).0)
    }

    /// Rows per cluster, index `k − 1` for label `k`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }
}
