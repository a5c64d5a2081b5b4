//! Fairness-aware multitask learning for tabular risk prediction.
//!
//! The pipeline infers latent demographic subgroups (autoencoder embedding of
//! the sensitive columns followed by k-means), trains a shared encoder with one
//! prediction head per subgroup, and audits the result with per-class
//! demographic-parity and equalized-odds differences.
//!
//! Module map:
//!
//! * [`ingest`]: schemas, CSV loading, encoding, stratified splits, synthetic cohorts
//! * [`subgroup`]: autoencoder embedding and k-means subgroup inference
//! * [`fairmtl`]: the routed multitask network
//! * [`training`]: weighted loss, gradients, AdamW, scheduling, ablations
//! * [`baselines`]: CART random forest
//! * [`metrics`]: classification, fairness and statistical evaluation
//! * [`explain`]: Shapley attributions and Gini importance

pub mod baselines;
pub mod error;
pub mod explain;
pub mod fairmtl;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod subgroup;
pub mod training;

pub use error::{Error, Result};
