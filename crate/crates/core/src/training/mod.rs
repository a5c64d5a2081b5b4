//! Inverse-frequency weighted training of the routed network.

mod ablation;
mod checkpoint;
pub mod optim;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, AblationOptions, AblationResult, AblationRow, AblationRun, Variant};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use optim::{AdamW, AdamWConfig, PlateauConfig, ReduceOnPlateau};

use crate::error::{Error, Result};
use crate::fairmtl::{predict_labels, FairMtlGrads, FairMtlParams, ForwardPass, Mode, ModelShape, DEFAULT_DROPOUT, FULL_HIDDEN_WIDTHS, HEAD_HIDDEN};
use crate::ingest::{Cohort, Split};
use crate::metrics::macro_f1;
use crate::seed;

/// Probabilities are clamped below at this value before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Inverse-frequency sample weights; uniform `1/K` when off.
    pub reweighting: bool,
    /// One encoder for all subgroups; one encoder per subgroup when off.
    pub shared_layers: bool,
    /// One head per subgroup; a single head (plain network) when off.
    pub task_heads: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            reweighting: true,
            shared_layers: true,
            task_heads: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Weight of the squared norm of the head parameters.
    pub l2_lambda: f64,
    pub optimizer: AdamWConfig,
    pub scheduler: PlateauConfig,
    pub hidden_widths: Vec<usize>,
    pub head_hidden: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4.02e-5,
            batch_size: 64,
            max_epochs: 100,
            early_stop_patience: 10,
            l2_lambda: 1e-4,
            optimizer: AdamWConfig::default(),
            scheduler: PlateauConfig::default(),
            hidden_widths: FULL_HIDDEN_WIDTHS.to_vec(),
            head_hidden: HEAD_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            ablation: Ablation::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Small encoder and heads with a learning rate scaled up to match, for
    /// desk-sized cohorts of a few thousand rows.
    pub fn desk() -> Self {
        Self {
            learning_rate: 3e-3,
            max_epochs: 60,
            hidden_widths: vec![16, 8],
            head_hidden: 8,
            dropout: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::InvalidConfig("early-stopping patience must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2_lambda must be non-negative, got {}", self.l2_lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.scheduler.patience == 0 || !(self.scheduler.factor > 0.0 && self.scheduler.factor < 1.0) {
            return Err(Error::InvalidConfig("scheduler needs patience ≥ 1 and factor in (0, 1)".into()));
        }
        Ok(())
    }

    /// Number of heads actually trained for `k` inferred subgroups.
    pub fn effective_subgroups(&self, k: usize) -> usize {
        if self.ablation.task_heads {
            k
        } else {
            1
        }
    }

    pub fn model_shape(&self, input_dim: usize, k: usize, num_classes: usize) -> ModelShape {
        ModelShape {
            input_dim,
            hidden_widths: self.hidden_widths.clone(),
            head_hidden: self.head_hidden,
            num_subgroups: self.effective_subgroups(k),
            num_classes,
            dropout: self.dropout,
            shared_encoder: self.ablation.shared_layers,
        }
    }

    /// Routing actually used: the inferred labels, or all ones without task heads.
    pub fn effective_routing(&self, routing: &[usize]) -> Vec<usize> {
        if self.ablation.task_heads {
            routing.to_vec()
        } else {
            vec![1; routing.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupWeights {
    /// `w[k − 1]` is the weight of subgroup `k`.
    pub w: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SubgroupWeights {
    pub fn uniform(k: usize) -> Self {
        Self {
            w: vec![1.0 / k as f64; k],
            counts: Vec::new(),
        }
    }

    pub fn weight(&self, label: usize) -> f64 {
        self.w[label - 1]
    }

    /// Per-row weights for 1-based labels.
    pub fn row_weights(&self, z: &[usize]) -> Vec<f64> {
        z.iter().map(|&l| self.weight(l)).collect()
    }
}

/// `w_k = (1/n_k) / Σ_j (1/n_j)` over labels `1..=k`.
pub fn compute_weights(z: &[usize], k: usize) -> Result<SubgroupWeights> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut counts = vec![0usize; k];
    for &label in z {
        if label == 0 || label > k {
            return Err(Error::SubgroupOutOfRange { label, k });
        }
        counts[label - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptySubgroup(empty + 1));
    }
    let inverse: Vec<f64> = counts.iter().map(|&n| 1.0 / n as f64).collect();
    let total: f64 = inverse.iter().sum();
    Ok(SubgroupWeights {
        w: inverse.iter().map(|v| v / total).collect(),
        counts,
    })
}

/// A mini-batch: features, labels in `0..C`, subgroup labels in `1..=K`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [usize],
    pub z: &'a [usize],
}

impl Batch<'_> {
    fn check(&self, num_classes: usize) -> Result<()> {
        if self.y.len() != self.x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "batch labels".into(),
                expected: self.x.nrows(),
                found: self.y.len(),
            });
        }
        if let Some(&c) = self.y.iter().find(|&&c| c >= num_classes) {
            return Err(Error::DimensionMismatch {
                context: "class label".into(),
                expected: num_classes,
                found: c,
            });
        }
        Ok(())
    }
}

/// `Σ_i w_{z_i} · −ln max(p_i[y_i], 1e−12)`.
pub fn data_loss(probs: &Array2<f64>, y: &[usize], z: &[usize], weights: &SubgroupWeights) -> f64 {
    y.iter()
        .zip(z)
        .enumerate()
        .map(|(i, (&c, &g))| -weights.weight(g) * probs[[i, c]].max(LOG_FLOOR).ln())
        .sum()
}

/// `Σ_k ||θ_k||²` over every head parameter.
pub fn head_penalty(params: &FairMtlParams) -> f64 {
    params.heads.iter().map(|h| h.squared_norm()).sum()
}

/// Total objective with evaluation-mode forward: data term plus `λ Σ_k ||θ_k||²`.
pub fn loss(params: &FairMtlParams, batch: Batch, weights: &SubgroupWeights, lambda: f64) -> Result<f64> {
    batch.check(params.num_classes())?;
    let probs = params.predict_proba(batch.x, batch.z)?;
    Ok(data_loss(&probs, batch.y, batch.z, weights) + lambda * head_penalty(params))
}

/// Objective value, analytic gradients and the forward pass they came from.
pub struct LossGradients {
    pub loss: f64,
    pub grads: FairMtlGrads,
    pub pass: ForwardPass,
}

/// Backpropagates the total objective. `mode` picks batch or running
/// normalisation statistics; training mode with dropout needs `rng`.
pub fn gradients(
    params: &FairMtlParams,
    batch: Batch,
    weights: &SubgroupWeights,
    lambda: f64,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LossGradients> {
    batch.check(params.num_classes())?;
    let pass = params.forward_pass(batch.x, batch.z, mode, rng)?;
    let loss = data_loss(&pass.probs, batch.y, batch.z, weights) + lambda * head_penalty(params);
    let mut grad_logits = pass.probs.clone();
    for (i, (&c, &g)) in batch.y.iter().zip(batch.z).enumerate() {
        let mut row = grad_logits.row_mut(i);
        if pass.probs[[i, c]] < LOG_FLOOR {
            // the clamp is flat here
            row.fill(0.0);
            continue;
        }
        row[c] -= 1.0;
        row *= weights.weight(g);
    }
    let mut grads = pass.backward(params, &grad_logits);
    if lambda > 0.0 {
        for (grad, head) in grads.heads.iter_mut().zip(&params.heads) {
            grad.hidden.weight.scaled_add(2.0 * lambda, &head.hidden.weight);
            grad.hidden.bias.scaled_add(2.0 * lambda, &head.hidden.bias);
            grad.output.weight.scaled_add(2.0 * lambda, &head.output.weight);
            grad.output.bias.scaled_add(2.0 * lambda, &head.output.bias);
        }
    }
    Ok(LossGradients { loss, grads, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over mini-batches of the summed batch objective.
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
    pub weights: SubgroupWeights,
}

impl TrainingLog {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn validation_macro_f1(params: &FairMtlParams, x: &Array2<f64>, y: &[usize], z: &[usize]) -> Result<f64> {
    let pred = predict_labels(&params.predict_proba(x, z)?);
    Ok(macro_f1(y, &pred, params.num_classes()))
}

/// Trains on the cohort's train rows with validation-driven scheduling and
/// early stopping. `routing` holds a subgroup label in `1..=k` for every row
/// of the cohort. Returns the parameters of the best validation epoch.
pub fn train(cohort: &Cohort, routing: &[usize], k: usize, config: &TrainingConfig) -> Result<(FairMtlParams, TrainingLog)> {
    config.validate()?;
    if routing.len() != cohort.len() {
        return Err(Error::DimensionMismatch {
            context: "subgroup assignment".into(),
            expected: cohort.len(),
            found: routing.len(),
        });
    }
    if let Some(&label) = routing.iter().find(|&&l| l == 0 || l > k) {
        return Err(Error::SubgroupOutOfRange { label, k });
    }
    let train_rows = cohort.rows(Split::Train);
    let val_rows = cohort.rows(Split::Val);
    if train_rows.is_empty() {
        return Err(Error::Empty("cohort has no train rows".into()));
    }
    if val_rows.is_empty() {
        return Err(Error::Empty("cohort has no validation rows".into()));
    }
    let routing = config.effective_routing(routing);
    let heads = config.effective_subgroups(k);
    let shape = config.model_shape(cohort.num_features(), k, cohort.num_classes());
    let mut params = FairMtlParams::init(shape, config.seed)?;

    let z_train: Vec<usize> = train_rows.iter().map(|&i| routing[i]).collect();
    let weights = if config.ablation.reweighting {
        compute_weights(&z_train, heads)?
    } else {
        SubgroupWeights::uniform(heads)
    };
    let x_val = cohort.select_x(&val_rows);
    let y_val = cohort.select_y(&val_rows);
    let z_val: Vec<usize> = val_rows.iter().map(|&i| routing[i]).collect();

    let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
    let mut optimizer = AdamW::new(config.optimizer, &sizes);
    let mut scheduler = ReduceOnPlateau::new(config.scheduler, config.learning_rate);
    let mut shuffle_rng = seed::rng(config.seed, seed::STREAM_SHUFFLE);
    let mut dropout_rng = seed::rng(config.seed, seed::STREAM_DROPOUT);

    let mut order = train_rows.clone();
    let mut best = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = scheduler.lr();
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = cohort.select_x(chunk);
            let y = cohort.select_y(chunk);
            let z: Vec<usize> = chunk.iter().map(|&i| routing[i]).collect();
            let step = gradients(
                &params,
                Batch { x: &x, y: &y, z: &z },
                &weights,
                config.l2_lambda,
                Mode::Train,
                Some(&mut dropout_rng),
            )?;
            if !step.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: step.loss,
                });
            }
            step.pass.update_running_stats(&mut params);
            optimizer.step(params.trainable_mut(), step.grads.tensors(), lr);
            if !params.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: step.loss,
                });
            }
            total += step.loss;
            batches += 1;
        }
        let val_f1 = validation_macro_f1(&params, &x_val, &y_val, &z_val)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / batches as f64,
            val_macro_f1: val_f1,
            learning_rate: lr,
        });
        log::debug!("epoch {epoch}: loss {:.5} val macro-F1 {val_f1:.4} lr {lr:.3e}", total / batches as f64);
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= config.early_stop_patience {
            stopped_early = epoch < config.max_epochs;
            break;
        }
        scheduler.step(val_f1);
    }

    Ok((
        best,
        TrainingLog {
            epochs,
            best_epoch,
            best_val_macro_f1: best_f1,
            stopped_early,
            weights,
        },
    ))
}
