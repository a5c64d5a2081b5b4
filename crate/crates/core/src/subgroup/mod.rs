//! Latent subgroup inference: an autoencoder embeds the sensitive columns and
//! k-means clusters the embedding. Cluster labels route rows to task heads.

mod autoencoder;
mod kmeans;

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use autoencoder::{default_hidden_width, fit_autoencoder, train_autoencoder, EmbeddingParams, Layer};
pub use kmeans::{kmeans_fit, SubgroupAssignment};

use crate::error::{Error, Result};
use crate::ingest::{Cohort, Split};
use crate::seed;

pub const SUBGROUP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitRows {
    /// Fit on train rows, assign validation and test rows afterwards.
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgroupConfig {
    pub k: usize,
    pub bottleneck: usize,
    pub autoencoder_epochs: usize,
    pub kmeans_max_iters: usize,
    pub fit_rows: FitRows,
    pub seed: u64,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        Self {
            k: 2,
            bottleneck: 2,
            autoencoder_epochs: 300,
            kmeans_max_iters: 100,
            fit_rows: FitRows::Train,
            seed: 0,
        }
    }
}

/// Everything needed to reproduce routing at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupModel {
    pub format_version: u32,
    pub k: usize,
    pub bottleneck_dim: usize,
    pub embedding: EmbeddingParams,
    pub assignment: SubgroupAssignment,
}

impl SubgroupModel {
    pub fn new(embedding: EmbeddingParams, assignment: SubgroupAssignment) -> Self {
        Self {
            format_version: SUBGROUP_FORMAT_VERSION,
            k: assignment.k,
            bottleneck_dim: embedding.bottleneck(),
            embedding,
            assignment,
        }
    }

    /// Routes unseen rows of a sensitive matrix.
    pub fn assign(&self, sensitive: &Array2<f64>) -> Result<Vec<usize>> {
        assign(&self.assignment, &self.embedding, sensitive)
    }

    /// Same model with clusters renamed: cluster `j` (1-based) becomes `permutation[j − 1]`.
    pub fn relabeled(&self, permutation: &[usize]) -> Result<Self> {
        let k = self.k;
        let mut sorted = permutation.to_vec();
        sorted.sort();
        if sorted != (1..=k).collect::<Vec<_>>() {
            return Err(Error::InvalidConfig(format!("{permutation:?} is not a permutation of 1..={k}")));
        }
        let mut next = self.clone();
        for (old, &new) in permutation.iter().enumerate() {
            next.assignment.centroids.row_mut(new - 1).assign(&self.assignment.centroids.row(old));
        }
        next.assignment.labels = self.assignment.labels.iter().map(|&l| permutation[l - 1]).collect();
        Ok(next)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if model.format_version != SUBGROUP_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "subgroup model format {} is not supported",
                model.format_version
            )));
        }
        if model.assignment.centroids.nrows() != model.k || model.embedding.bottleneck() != model.bottleneck_dim {
            return Err(Error::Checkpoint("subgroup model fields are inconsistent".into()));
        }
        Ok(model)
    }
}

/// Embeds `sensitive` and returns nearest-centroid labels in `1..=K`.
pub fn assign(assignment: &SubgroupAssignment, params: &EmbeddingParams, sensitive: &Array2<f64>) -> Result<Vec<usize>> {
    let embedded = params.embed(sensitive)?;
    assignment.nearest(&embedded)
}

/// Fits the embedding and clustering on the configured rows of `cohort`, then
/// returns the model with a label for every row of the cohort.
pub fn infer_subgroups(cohort: &Cohort, config: &SubgroupConfig) -> Result<(SubgroupModel, Vec<usize>)> {
    cohort.schema().require_sensitive()?;
    let sensitive = cohort.sensitive_matrix();
    let rows = match config.fit_rows {
        FitRows::Train => cohort.rows(Split::Train),
        FitRows::All => (0..cohort.len()).collect(),
    };
    let fit_matrix = sensitive.select(ndarray::Axis(0), &rows);
    let bottleneck = config.bottleneck.min(sensitive.ncols());
    let embedding = fit_autoencoder(
        &fit_matrix,
        bottleneck,
        config.autoencoder_epochs,
        seed::derive(config.seed, seed::STREAM_AUTOENCODER),
    )?;
    let embedded = embedding.embed(&fit_matrix)?;
    let assignment = kmeans_fit(
        &embedded,
        config.k,
        config.kmeans_max_iters,
        seed::derive(config.seed, seed::STREAM_KMEANS),
    )?;
    let model = SubgroupModel::new(embedding, assignment);
    let labels = model.assign(&sensitive)?;
    Ok((model, labels))
}
