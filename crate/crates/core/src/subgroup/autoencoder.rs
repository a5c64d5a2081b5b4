//! Symmetric autoencoder used to embed the sensitive columns.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, DenseGrad, Init};
use crate::seed;
use crate::training::optim::{AdamW, AdamWConfig};

const LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub dense: Dense,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = self.dense.forward(x);
        self.activation.apply(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

/// Hidden width used for `d_s` sensitive inputs: `max(4, 2·d_s)`.
pub fn default_hidden_width(inputs: usize) -> usize {
    (2 * inputs).max(4)
}

impl EmbeddingParams {
    /// `d_s → h (tanh) → m → h (tanh) → d_s` with `h = max(4, 2·d_s)`.
    pub fn new(inputs: usize, bottleneck: usize, seed: u64) -> Result<Self> {
        if inputs == 0 {
            return Err(Error::InvalidConfig("no sensitive columns to embed".into()));
        }
        if bottleneck == 0 || bottleneck > inputs {
            return Err(Error::InvalidConfig(format!(
                "bottleneck must be in 1..={inputs}, got {bottleneck}"
            )));
        }
        let hidden = default_hidden_width(inputs);
        let mut rng = seed::rng(seed, seed::STREAM_AUTOENCODER);
        let layer = |i, o, activation, rng: &mut _| Layer {
            dense: Dense::new(i, o, Init::LeCun, rng),
            activation,
        };
        Ok(Self {
            encoder: vec![
                layer(inputs, hidden, Activation::Tanh, &mut rng),
                layer(hidden, bottleneck, Activation::Identity, &mut rng),
            ],
            decoder: vec![
                layer(bottleneck, hidden, Activation::Tanh, &mut rng),
                layer(hidden, inputs, Activation::Identity, &mut rng),
            ],
        })
    }

    /// Single linear layer each way with identity weights.
    pub fn identity(inputs: usize) -> Self {
        let eye = || Layer {
            dense: Dense {
                weight: Array2::eye(inputs),
                bias: ndarray::Array1::zeros(inputs),
            },
            activation: Activation::Identity,
        };
        Self {
            encoder: vec![eye()],
            decoder: vec![eye()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].dense.inputs()
    }

    pub fn bottleneck(&self) -> usize {
        self.encoder.last().expect("encoder has layers").dense.outputs()
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(&mut self.decoder)
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|l| l.dense.is_finite())
    }

    fn check_input(&self, s: &Array2<f64>) -> Result<()> {
        if s.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "sensitive matrix columns".into(),
                expected: self.input_dim(),
                found: s.ncols(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensitive matrix".into()));
        }
        Ok(())
    }

    /// The encoder half `φ(S)`.
    pub fn embed(&self, s: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(s)?;
        Ok(self.encoder.iter().fold(s.clone(), |h, layer| layer.forward(&h)))
    }

    pub fn reconstruct(&self, s: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(s)?;
        Ok(self.layers().fold(s.clone(), |h, layer| layer.forward(&h)))
    }

    pub fn reconstruction_mse(&self, s: &Array2<f64>) -> Result<f64> {
        let out = self.reconstruct(s)?;
        Ok((&out - s).mapv(|v| v * v).mean().unwrap_or(0.0))
    }

    /// Mean squared reconstruction error and its gradient.
    fn loss_and_grad(&self, s: &Array2<f64>) -> (f64, Vec<DenseGrad>) {
        let mut activations = vec![s.clone()];
        for layer in self.layers() {
            let next = layer.forward(activations.last().unwrap());
            activations.push(next);
        }
        let out = activations.last().unwrap();
        let diff = out - s;
        let count = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / count;
        let mut grad = diff * (2.0 / count);
        let layers: Vec<&Layer> = self.layers().collect();
        let mut grads = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate().rev() {
            layer.activation.backprop(&activations[i + 1], &mut grad);
            let (g, upstream) = layer.dense.backward(&activations[i], &grad);
            grads.push(g);
            grad = upstream;
        }
        grads.reverse();
        (loss, grads)
    }
}

/// Trains the default autoencoder on `s` with full-batch Adam and returns the
/// parameters with the lowest reconstruction error seen, so the result is never
/// worse than the initialisation.
pub fn fit_autoencoder(s: &Array2<f64>, bottleneck: usize, epochs: usize, seed: u64) -> Result<EmbeddingParams> {
    let params = EmbeddingParams::new(s.ncols(), bottleneck, seed)?;
    train_autoencoder(params, s, epochs)
}

/// Continues training from `params`.
pub fn train_autoencoder(mut params: EmbeddingParams, s: &Array2<f64>, epochs: usize) -> Result<EmbeddingParams> {
    params.check_input(s)?;
    if s.nrows() == 0 {
        return Err(Error::Empty("sensitive matrix has no rows".into()));
    }
    let sizes: Vec<usize> = params
        .layers()
        .flat_map(|l| [l.dense.weight.len(), l.dense.bias.len()])
        .collect();
    let mut optimizer = AdamW::new(
        AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        },
        &sizes,
    );
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    for _ in 0..epochs {
        let (loss, grads) = params.loss_and_grad(s);
        if !loss.is_finite() {
            return Err(Error::NonFinite("autoencoder reconstruction loss".into()));
        }
        if loss < best_loss {
            best_loss = loss;
            best = params.clone();
        }
        let tensors: Vec<&mut [f64]> = params
            .layers_mut()
            .flat_map(|l| {
                [
                    l.dense.weight.as_slice_mut().expect("standard layout"),
                    l.dense.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect();
        let grad_tensors: Vec<&[f64]> = grads
            .iter()
            .flat_map(|g| {
                [
                    g.weight.as_slice().expect("standard layout"),
                    g.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect();
        optimizer.step(tensors, grad_tensors, LEARNING_RATE);
    }
    let final_loss = params.reconstruction_mse(s)?;
    if final_loss < best_loss {
        best = params;
    }
    Ok(best)
}
