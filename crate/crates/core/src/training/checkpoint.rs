use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::TrainingConfig;
use crate::error::{Error, Result};
use crate::fairmtl::{predict_labels, FairMtlParams};
use crate::ingest::Cohort;
use crate::subgroup::SubgroupModel;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained network with everything needed to route and score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Heads in the network; 1 when trained without task heads.
    pub num_subgroups: usize,
    pub feature_names: Vec<String>,
    /// Encoded columns fed to the subgroup model.
    pub sensitive_columns: Vec<usize>,
    pub config: TrainingConfig,
    /// Present whenever the network has more than one head.
    pub subgroups: Option<SubgroupModel>,
    pub params: FairMtlParams,
}

impl Checkpoint {
    pub fn new(params: FairMtlParams, config: TrainingConfig, cohort: &Cohort, subgroups: Option<SubgroupModel>) -> Result<Self> {
        let k = params.num_subgroups();
        let subgroups = if k == 1 { None } else { subgroups };
        let checkpoint = Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            num_subgroups: k,
            feature_names: cohort.feature_names().to_vec(),
            sensitive_columns: cohort.sensitive_columns().to_vec(),
            config,
            subgroups,
            params,
        };
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("format {} is not supported", self.format_version)));
        }
        if self.params.num_subgroups() != self.num_subgroups {
            return Err(Error::Checkpoint("head count disagrees with num_subgroups".into()));
        }
        if self.params.shape.input_dim != self.feature_names.len() {
            return Err(Error::Checkpoint("input width disagrees with feature names".into()));
        }
        match &self.subgroups {
            Some(model) if model.k != self.num_subgroups => Err(Error::Checkpoint(format!(
                "subgroup model has K = {} but the network has {} heads",
                model.k, self.num_subgroups
            ))),
            None if self.num_subgroups > 1 => Err(Error::Checkpoint("multi-head network without a subgroup model".into())),
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let checkpoint: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    /// Errors unless `cohort` has the feature layout the network was trained on.
    pub fn check_compatible(&self, cohort: &Cohort) -> Result<()> {
        if cohort.num_features() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                context: "cohort feature width".into(),
                expected: self.feature_names.len(),
                found: cohort.num_features(),
            });
        }
        if cohort.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Schema {
                column: "features".into(),
                message: "cohort columns differ from the checkpoint's".into(),
            });
        }
        if cohort.num_classes() != self.params.num_classes() {
            return Err(Error::DimensionMismatch {
                context: "class count".into(),
                expected: self.params.num_classes(),
                found: cohort.num_classes(),
            });
        }
        Ok(())
    }

    /// Subgroup label per row, computed from the sensitive columns of `x`.
    pub fn route(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        match &self.subgroups {
            None => Ok(vec![1; x.nrows()]),
            Some(model) => model.assign(&x.select(Axis(1), &self.sensitive_columns)),
        }
    }

    /// Routes then scores; the black-box view of the whole pipeline.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.route(x)?;
        self.params.predict_proba(x, &z)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(predict_labels(&self.predict_proba(x)?))
    }
}
