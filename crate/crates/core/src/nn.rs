//! Dense building blocks shared by the autoencoder and the multitask network.
//!
//! Matrices are `rows × features`; a dense layer stores its weight as
//! `inputs × outputs` so that the forward pass is `x · W + b`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// activation's output.
    pub fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => Zip::from(grad).and(output).for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
        }
    }
}

/// Fan-in scaled uniform initialisation.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// U(±√(6 / fan_in)), for layers feeding a ReLU.
    He,
    /// U(±√(3 / fan_in)), for linear or tanh outputs.
    LeCun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseGrad {
    pub fn zeros(layer: &Dense) -> Self {
        Self {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, init: Init, rng: &mut R) -> Self {
        let fan_in = inputs.max(1) as f64;
        let bound = match init {
            Init::He => (6.0 / fan_in).sqrt(),
            Init::LeCun => (3.0 / fan_in).sqrt(),
        };
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || dist.sample(rng));
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns parameter gradients and the gradient with respect to `input`.
    pub fn backward(&self, input: &Array2<f64>, grad_out: &Array2<f64>) -> (DenseGrad, Array2<f64>) {
        let grad = DenseGrad {
            weight: input.t().dot(grad_out).as_standard_layout().into_owned(),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad, grad_out.dot(&self.weight.t()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.weight.iter().chain(self.bias.iter()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Batch normalisation over the row axis with PyTorch running-stat semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Statistics a normalisation step used, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    /// `Some((mean, unbiased variance))` when batch statistics were used.
    pub batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Normalises with batch statistics when `use_batch` holds and the batch has
    /// at least two rows; otherwise with the running statistics.
    pub fn forward(&self, x: &Array2<f64>, use_batch: bool) -> (Array2<f64>, NormCache) {
        let rows = x.nrows();
        let (mean, var, batch_stats) = if use_batch && rows >= 2 {
            let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = x - &mean;
            let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            let unbiased = &var * (rows as f64 / (rows as f64 - 1.0));
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let normalized = (x - &mean) * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        (
            out,
            NormCache {
                normalized,
                inv_std,
                batch_stats,
            },
        )
    }

    pub fn backward(&self, cache: &NormCache, grad_out: &Array2<f64>) -> (NormGrad, Array2<f64>) {
        let grad = NormGrad {
            gamma: (grad_out * &cache.normalized).sum_axis(Axis(0)),
            beta: grad_out.sum_axis(Axis(0)),
        };
        let grad_norm = grad_out * &self.gamma;
        let grad_in = if cache.batch_stats.is_some() {
            let n = grad_out.nrows() as f64;
            let sum_g = grad_norm.sum_axis(Axis(0));
            let sum_gx = (&grad_norm * &cache.normalized).sum_axis(Axis(0));
            let mut g = &grad_norm * n - &sum_g - &cache.normalized * &sum_gx;
            g *= &(&cache.inv_std / n);
            g
        } else {
            grad_norm * &cache.inv_std
        };
        (grad, grad_in)
    }

    pub fn update_running(&mut self, cache: &NormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = self.momentum;
            self.running_mean = &self.running_mean * (1.0 - m) + mean * m;
            self.running_var = &self.running_var * (1.0 - m) + var * m;
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<'a>(values: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_rows(&Array2::zeros((2, 4)));
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax_rows(&array![[1000.0, 0.0, -1000.0]]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.2, 0.6, 0.1]), 2);
        assert_eq!(argmax(&[0.1, 0.6, 0.6]), 1);
    }

    #[test]
    fn batch_norm_backward_matches_finite_differences() {
        let norm = BatchNorm {
            gamma: array![1.3, 0.7],
            beta: array![0.1, -0.2],
            ..BatchNorm::new(2)
        };
        let x = array![[0.3, -1.0], [1.2, 0.4], [-0.7, 2.0], [0.05, 0.9]];
        let upstream = array![[0.2, -0.1], [0.5, 0.3], [-0.4, 0.8], [0.1, -0.6]];
        let objective = |x: &Array2<f64>| (norm.forward(x, true).0 * &upstream).sum();
        let (_, cache) = norm.forward(&x, true);
        let (_, grad) = norm.backward(&cache, &upstream);
        let h = 1e-6;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut plus = x.clone();
                plus[[i, j]] += h;
                let mut minus = x.clone();
                minus[[i, j]] -= h;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                assert!((numeric - grad[[i, j]]).abs() < 1e-6, "{numeric} vs {}", grad[[i, j]]);
            }
        }
    }

    #[test]
    fn single_row_batch_falls_back_to_running_stats() {
        let norm = BatchNorm::new(3);
        let (_, cache) = norm.forward(&array![[1.0, 2.0, 3.0]], true);
        assert!(cache.batch_stats.is_none());
    }
}
