//! The routed multitask network.
//!
//! A shared encoder (`affine → batch-norm → ReLU → dropout` per hidden width)
//! feeds `K` identically shaped heads (`affine → ReLU → affine → softmax`).
//! Row `i` is scored by head `z_i`. With `shared_encoder = false` each subgroup
//! gets its own encoder tower of the same shape instead.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, softmax_rows, Activation, BatchNorm, Dense, DenseGrad, Init, NormCache, NormGrad};
use crate::seed;

/// Encoder widths of the full-scale configuration.
pub const FULL_HIDDEN_WIDTHS: [usize; 7] = [2048, 64, 4096, 512, 2048, 128, 32];
pub const DEFAULT_DROPOUT: f64 = 0.23;
/// Width of the single hidden layer inside every head.
pub const HEAD_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub head_hidden: usize,
    pub num_subgroups: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub shared_encoder: bool,
}

impl ModelShape {
    pub fn new(input_dim: usize, hidden_widths: &[usize], num_subgroups: usize, num_classes: usize, dropout: f64) -> Self {
        Self {
            input_dim,
            hidden_widths: hidden_widths.to_vec(),
            head_hidden: HEAD_HIDDEN,
            num_subgroups,
            num_classes,
            dropout,
            shared_encoder: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidConfig("hidden widths must not be empty".into()));
        }
        if self.input_dim == 0 || self.head_hidden == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.num_subgroups == 0 {
            return Err(Error::InvalidConfig("need at least one subgroup head".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width the heads consume: the last encoder width.
    pub fn head_input(&self) -> usize {
        *self.hidden_widths.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub dense: Dense,
    pub norm: BatchNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub blocks: Vec<EncoderBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Dense,
    pub output: Dense,
}

impl Head {
    pub fn squared_norm(&self) -> f64 {
        self.hidden.squared_norm() + self.output.squared_norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairMtlParams {
    pub shape: ModelShape,
    pub encoders: Vec<Encoder>,
    pub heads: Vec<Head>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad {
    pub dense: DenseGrad,
    pub norm: NormGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub hidden: DenseGrad,
    pub output: DenseGrad,
}

/// Gradients with the same layout as [`FairMtlParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FairMtlGrads {
    pub encoders: Vec<Vec<BlockGrad>>,
    pub heads: Vec<HeadGrad>,
}

impl FairMtlGrads {
    pub fn zeros(params: &FairMtlParams) -> Self {
        Self {
            encoders: params
                .encoders
                .iter()
                .map(|e| {
                    e.blocks
                        .iter()
                        .map(|b| BlockGrad {
                            dense: DenseGrad::zeros(&b.dense),
                            norm: NormGrad {
                                gamma: ndarray::Array1::zeros(b.norm.gamma.len()),
                                beta: ndarray::Array1::zeros(b.norm.beta.len()),
                            },
                        })
                        .collect()
                })
                .collect(),
            heads: params
                .heads
                .iter()
                .map(|h| HeadGrad {
                    hidden: DenseGrad::zeros(&h.hidden),
                    output: DenseGrad::zeros(&h.output),
                })
                .collect(),
        }
    }

    /// Flat views in [`FairMtlParams::trainable`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for blocks in &self.encoders {
            for b in blocks {
                out.push(b.dense.weight.as_slice().expect("standard layout"));
                out.push(b.dense.bias.as_slice().expect("standard layout"));
                out.push(b.norm.gamma.as_slice().expect("standard layout"));
                out.push(b.norm.beta.as_slice().expect("standard layout"));
            }
        }
        for h in &self.heads {
            out.push(h.hidden.weight.as_slice().expect("standard layout"));
            out.push(h.hidden.bias.as_slice().expect("standard layout"));
            out.push(h.output.weight.as_slice().expect("standard layout"));
            out.push(h.output.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

struct BlockCache {
    input: Array2<f64>,
    norm: NormCache,
    activated: Array2<f64>,
    mask: Option<Array2<f64>>,
}

struct TowerCache {
    encoder: usize,
    blocks: Vec<BlockCache>,
    output: Array2<f64>,
}

struct HeadCache {
    head: usize,
    tower: usize,
    /// Positions inside the tower output.
    positions: Vec<usize>,
    /// Batch rows.
    rows: Vec<usize>,
    input: Array2<f64>,
    hidden: Array2<f64>,
}

/// A forward pass with everything the backward pass needs.
pub struct ForwardPass {
    pub probs: Array2<f64>,
    towers: Vec<TowerCache>,
    heads: Vec<HeadCache>,
}

impl FairMtlParams {
    /// Fan-in scaled uniform initialisation: He for layers feeding a ReLU,
    /// LeCun for the logit layer, zero biases, unit batch-norm scale.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = seed::rng(seed, seed::STREAM_INIT);
        let towers = if shape.shared_encoder { 1 } else { shape.num_subgroups };
        let encoders = (0..towers)
            .map(|_| {
                let mut width = shape.input_dim;
                Encoder {
                    blocks: shape
                        .hidden_widths
                        .iter()
                        .map(|&out| {
                            let block = EncoderBlock {
                                dense: Dense::new(width, out, Init::He, &mut rng),
                                norm: BatchNorm::new(out),
                            };
                            width = out;
                            block
                        })
                        .collect(),
                }
            })
            .collect();
        let heads = (0..shape.num_subgroups)
            .map(|_| Head {
                hidden: Dense::new(shape.head_input(), shape.head_hidden, Init::He, &mut rng),
                output: Dense::new(shape.head_hidden, shape.num_classes, Init::LeCun, &mut rng),
            })
            .collect();
        Ok(Self { shape, encoders, heads })
    }

    pub fn num_subgroups(&self) -> usize {
        self.shape.num_subgroups
    }

    pub fn num_classes(&self) -> usize {
        self.shape.num_classes
    }

    /// Trainable tensors: per encoder block weight, bias, γ, β; per head
    /// hidden weight, bias, output weight, bias.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for e in &self.encoders {
            for b in &e.blocks {
                out.push(b.dense.weight.as_slice().expect("standard layout"));
                out.push(b.dense.bias.as_slice().expect("standard layout"));
                out.push(b.norm.gamma.as_slice().expect("standard layout"));
                out.push(b.norm.beta.as_slice().expect("standard layout"));
            }
        }
        for h in &self.heads {
            out.push(h.hidden.weight.as_slice().expect("standard layout"));
            out.push(h.hidden.bias.as_slice().expect("standard layout"));
            out.push(h.output.weight.as_slice().expect("standard layout"));
            out.push(h.output.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            for b in &mut e.blocks {
                out.push(b.dense.weight.as_slice_mut().expect("standard layout"));
                out.push(b.dense.bias.as_slice_mut().expect("standard layout"));
                out.push(b.norm.gamma.as_slice_mut().expect("standard layout"));
                out.push(b.norm.beta.as_slice_mut().expect("standard layout"));
            }
        }
        for h in &mut self.heads {
            out.push(h.hidden.weight.as_slice_mut().expect("standard layout"));
            out.push(h.hidden.bias.as_slice_mut().expect("standard layout"));
            out.push(h.output.weight.as_slice_mut().expect("standard layout"));
            out.push(h.output.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Number of trainable tensors belonging to the encoders; head tensors follow.
    pub fn encoder_tensor_count(&self) -> usize {
        self.encoders.iter().map(|e| 4 * e.blocks.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn validate_batch(&self, x: &Array2<f64>, z: &[usize]) -> Result<()> {
        if x.ncols() != self.shape.input_dim {
            return Err(Error::DimensionMismatch {
                context: "feature width".into(),
                expected: self.shape.input_dim,
                found: x.ncols(),
            });
        }
        if z.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "subgroup labels".into(),
                expected: x.nrows(),
                found: z.len(),
            });
        }
        let k = self.shape.num_subgroups;
        if let Some(&label) = z.iter().find(|&&l| l == 0 || l > k) {
            return Err(Error::SubgroupOutOfRange { label, k });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature batch".into()));
        }
        Ok(())
    }

    fn run_tower(
        &self,
        encoder: usize,
        rows: &[usize],
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<TowerCache> {
        let mut h = x.select(Axis(0), rows);
        let mut blocks = Vec::with_capacity(self.encoders[encoder].blocks.len());
        let p = self.shape.dropout;
        for block in &self.encoders[encoder].blocks {
            let affine = block.dense.forward(&h);
            let (mut activated, norm) = block.norm.forward(&affine, mode == Mode::Train);
            Activation::Relu.apply(&mut activated);
            let mask = if mode == Mode::Train && p > 0.0 {
                let rng = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::InvalidConfig("training-mode dropout needs an RNG".into()))?;
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_simple_fn(activated.raw_dim(), || {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                }))
            } else {
                None
            };
            let out = match &mask {
                Some(m) => &activated * m,
                None => activated.clone(),
            };
            blocks.push(BlockCache {
                input: std::mem::replace(&mut h, out),
                norm,
                activated,
                mask,
            });
        }
        Ok(TowerCache {
            encoder,
            blocks,
            output: h,
        })
    }

    /// Forward pass keeping intermediate values. Training mode requires `rng`
    /// whenever the dropout rate is positive. Running statistics are left
    /// untouched; see [`ForwardPass::update_running_stats`].
    pub fn forward_pass(
        &self,
        x: &Array2<f64>,
        z: &[usize],
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass> {
        self.validate_batch(x, z)?;
        let k = self.shape.num_subgroups;
        let groups: Vec<Vec<usize>> = (1..=k)
            .map(|g| (0..z.len()).filter(|&i| z[i] == g).collect())
            .collect();

        let mut towers = Vec::new();
        let mut heads = Vec::new();
        if self.shape.shared_encoder {
            let tower = self.run_tower(0, &(0..z.len()).collect::<Vec<_>>(), x, mode, &mut rng)?;
            for (g, rows) in groups.iter().enumerate() {
                if !rows.is_empty() {
                    heads.push((g, 0, rows.clone(), rows.clone()));
                }
            }
            towers.push(tower);
        } else {
            for (g, rows) in groups.iter().enumerate() {
                if rows.is_empty() {
                    continue;
                }
                towers.push(self.run_tower(g, rows, x, mode, &mut rng)?);
                heads.push((g, towers.len() - 1, (0..rows.len()).collect(), rows.clone()));
            }
        }

        let mut probs = Array2::zeros((z.len(), self.shape.num_classes));
        let mut head_caches = Vec::with_capacity(heads.len());
        for (g, tower, positions, rows) in heads {
            let head = &self.heads[g];
            let input = towers[tower].output.select(Axis(0), &positions);
            let mut hidden = head.hidden.forward(&input);
            Activation::Relu.apply(&mut hidden);
            let p = softmax_rows(&head.output.forward(&hidden));
            for (r, &row) in rows.iter().enumerate() {
                probs.row_mut(row).assign(&p.row(r));
            }
            head_caches.push(HeadCache {
                head: g,
                tower,
                positions,
                rows,
                input,
                hidden,
            });
        }
        Ok(ForwardPass {
            probs,
            towers,
            heads: head_caches,
        })
    }

    /// Evaluation-mode class probabilities; a pure function of the parameters.
    pub fn predict_proba(&self, x: &Array2<f64>, z: &[usize]) -> Result<Array2<f64>> {
        Ok(self.forward_pass(x, z, Mode::Eval, None)?.probs)
    }

    /// Forward in either mode. Training mode updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Array2<f64>, z: &[usize], mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<Array2<f64>> {
        let pass = self.forward_pass(x, z, mode, rng)?;
        if mode == Mode::Train {
            pass.update_running_stats(self);
        }
        Ok(pass.probs)
    }

    /// Argmax class per row, lowest class index on ties.
    pub fn predict(&self, x: &Array2<f64>, z: &[usize]) -> Result<Vec<usize>> {
        Ok(predict_labels(&self.predict_proba(x, z)?))
    }
}

pub fn predict_labels(probs: &Array2<f64>) -> Vec<usize> {
    probs.rows().into_iter().map(|r| argmax(r.iter())).collect()
}

impl ForwardPass {
    pub fn update_running_stats(&self, params: &mut FairMtlParams) {
        for tower in &self.towers {
            for (block, cache) in params.encoders[tower.encoder].blocks.iter_mut().zip(&tower.blocks) {
                block.norm.update_running(&cache.norm);
            }
        }
    }

    /// Backpropagates a gradient with respect to the pre-softmax logits.
    pub fn backward(&self, params: &FairMtlParams, grad_logits: &Array2<f64>) -> FairMtlGrads {
        let mut grads = FairMtlGrads::zeros(params);
        let mut tower_grads: Vec<Array2<f64>> = self
            .towers
            .iter()
            .map(|t| Array2::zeros(t.output.raw_dim()))
            .collect();
        for cache in &self.heads {
            let head = &params.heads[cache.head];
            let upstream = grad_logits.select(Axis(0), &cache.rows);
            let (output_grad, mut grad_hidden) = head.output.backward(&cache.hidden, &upstream);
            Activation::Relu.backprop(&cache.hidden, &mut grad_hidden);
            let (hidden_grad, grad_input) = head.hidden.backward(&cache.input, &grad_hidden);
            grads.heads[cache.head] = HeadGrad {
                hidden: hidden_grad,
                output: output_grad,
            };
            let target = &mut tower_grads[cache.tower];
            for (r, &pos) in cache.positions.iter().enumerate() {
                let mut row = target.row_mut(pos);
                row += &grad_input.row(r);
            }
        }
        for (tower, mut grad) in self.towers.iter().zip(tower_grads) {
            let encoder = &params.encoders[tower.encoder];
            for (b, (block, cache)) in encoder.blocks.iter().zip(&tower.blocks).enumerate().rev() {
                if let Some(mask) = &cache.mask {
                    grad *= mask;
                }
                Activation::Relu.backprop(&cache.activated, &mut grad);
                let (norm_grad, grad_affine) = block.norm.backward(&cache.norm, &grad);
                let (dense_grad, grad_input) = block.dense.backward(&cache.input, &grad_affine);
                grads.encoders[tower.encoder][b] = BlockGrad {
                    dense: dense_grad,
                    norm: norm_grad,
                };
                grad = grad_input;
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn desk(k: usize) -> FairMtlParams {
        FairMtlParams::init(ModelShape::new(5, &[32, 16], k, 4, 0.0), 3).unwrap()
    }

    fn batch() -> Array2<f64> {
        Array2::from_shape_fn((6, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0)
    }

    #[test]
    fn desk_shape() {
        let params = desk(2);
        assert_eq!(params.heads.len(), 2);
        for h in &params.heads {
            assert_eq!(h.hidden.inputs(), 16);
            assert_eq!(h.output.outputs(), 4);
        }
    }

    #[test]
    fn full_scale_defaults() {
        assert_eq!(FULL_HIDDEN_WIDTHS, [2048, 64, 4096, 512, 2048, 128, 32]);
        assert_eq!(DEFAULT_DROPOUT, 0.23);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(FairMtlParams::init(ModelShape::new(5, &[8, 0], 2, 4, 0.0), 0).is_err());
        assert!(FairMtlParams::init(ModelShape::new(5, &[], 2, 4, 0.0), 0).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        assert_eq!(desk(2), desk(2));
        let other = FairMtlParams::init(ModelShape::new(5, &[32, 16], 2, 4, 0.0), 4).unwrap();
        assert_ne!(desk(2), other);
    }

    #[test]
    fn identical_heads_ignore_routing() {
        let mut params = desk(2);
        params.heads[1] = params.heads[0].clone();
        let x = batch();
        let a = params.predict_proba(&x, &[1; 6]).unwrap();
        let b = params.predict_proba(&x, &[2, 1, 2, 2, 1, 2]).unwrap();
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut params = desk(1);
        params.heads[0].output.weight.fill(0.0);
        let p = params.predict_proba(&batch(), &[1; 6]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(params.predict(&batch(), &[1; 6]).unwrap(), vec![0; 6]);
    }

    #[test]
    fn eval_batch_equals_per_row_forwards() {
        let params = desk(2);
        let x = batch().slice(ndarray::s![0..3, ..]).to_owned();
        let z = [1, 2, 1];
        let together = params.predict_proba(&x, &z).unwrap();
        for i in 0..3 {
            let row = x.slice(ndarray::s![i..i + 1, ..]).to_owned();
            let single = params.predict_proba(&row, &z[i..i + 1]).unwrap();
            for c in 0..4 {
                assert!((single[[0, c]] - together[[i, c]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rows_sum_to_one_in_both_modes() {
        let mut params = FairMtlParams::init(ModelShape::new(5, &[32, 16], 2, 4, 0.3), 1).unwrap();
        let mut rng = seed::rng(0, 0);
        let z = [1, 2, 1, 2, 2, 1];
        let train = params.forward(&batch(), &z, Mode::Train, Some(&mut rng)).unwrap();
        let eval = params.predict_proba(&batch(), &z).unwrap();
        for p in [train, eval] {
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn running_stats_change_only_in_training() {
        let mut params = desk(2);
        let before = params.clone();
        params.forward(&batch(), &[1, 2, 1, 2, 1, 2], Mode::Eval, None).unwrap();
        assert_eq!(params, before);
        params.forward(&batch(), &[1, 2, 1, 2, 1, 2], Mode::Train, None).unwrap();
        assert_ne!(params.encoders[0].blocks[0].norm.running_mean, before.encoders[0].blocks[0].norm.running_mean);
    }

    #[test]
    fn subgroup_out_of_range() {
        let params = desk(2);
        let err = params.predict_proba(&batch(), &[1, 2, 3, 1, 1, 1]).unwrap_err();
        assert!(matches!(err, Error::SubgroupOutOfRange { label: 3, k: 2 }));
        assert!(params.predict_proba(&batch(), &[0, 1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn dropout_training_needs_rng() {
        let params = FairMtlParams::init(ModelShape::new(5, &[8], 1, 4, 0.5), 1).unwrap();
        assert!(params.forward_pass(&batch(), &[1; 6], Mode::Train, None).is_err());
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(predict_labels(&array![[0.1, 0.2, 0.6, 0.1], [0.25, 0.25, 0.25, 0.25]]), vec![2, 0]);
    }
}
