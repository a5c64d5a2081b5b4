use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age group boundaries used when a sensitive numeric column declares no bins:
/// 0–18, 19–35, 36–50, 51+.
pub const DEFAULT_AGE_BINS: [f64; 3] = [18.0, 35.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    SensitiveNumeric,
    SensitiveCategorical,
    Label,
}

impl ColumnKind {
    pub fn is_sensitive(self) -> bool {
        matches!(self, ColumnKind::SensitiveNumeric | ColumnKind::SensitiveCategorical)
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, ColumnKind::Categorical | ColumnKind::SensitiveCategorical)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Numeric | ColumnKind::SensitiveNumeric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered category values; one-hot columns follow this order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    /// Upper-inclusive group boundaries for a sensitive numeric column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bins: Vec<f64>,
}

impl ColumnSpec {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: ColumnKind::Numeric,
            vocabulary: Vec::new(),
            bins: Vec::new(),
        }
    }

    pub fn categorical(name: &str, vocabulary: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            kind: ColumnKind::Categorical,
            vocabulary: vocabulary.iter().map(|s| s.to_string()).collect(),
            bins: Vec::new(),
        }
    }

    pub fn sensitive(mut self) -> Self {
        self.kind = match self.kind {
            ColumnKind::Numeric => ColumnKind::SensitiveNumeric,
            ColumnKind::Categorical => ColumnKind::SensitiveCategorical,
            other => other,
        };
        self
    }

    pub fn with_bins(mut self, bins: &[f64]) -> Self {
        self.bins = bins.to_vec();
        self
    }

    pub fn label(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: ColumnKind::Label,
            vocabulary: Vec::new(),
            bins: Vec::new(),
        }
    }

    /// Boundaries used to group a sensitive numeric column.
    pub fn group_bins(&self) -> &[f64] {
        if self.bins.is_empty() {
            &DEFAULT_AGE_BINS
        } else {
            &self.bins
        }
    }

    /// Names of the encoded columns this schema column expands to.
    pub fn encoded_names(&self) -> Vec<String> {
        match self.kind {
            ColumnKind::Label => Vec::new(),
            k if k.is_categorical() => self
                .vocabulary
                .iter()
                .map(|v| format!("{}={}", self.name, v))
                .collect(),
            _ => vec![self.name.clone()],
        }
    }
}

/// Column layout of a tabular cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    /// Number of outcome classes C; labels take values `0..C`.
    pub num_classes: usize,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>, num_classes: usize) -> Result<Self> {
        let schema = Self { columns, num_classes };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Schema {
                column: self.label_column().map(|c| c.name.clone()).unwrap_or_default(),
                message: format!("need at least 2 classes, got {}", self.num_classes),
            });
        }
        let labels = self.columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(Error::Schema {
                column: "<label>".into(),
                message: format!("expected exactly one label column, found {labels}"),
            });
        }
        let mut names = HashSet::new();
        for column in &self.columns {
            if !names.insert(column.name.as_str()) {
                return Err(Error::Schema {
                    column: column.name.clone(),
                    message: "duplicate column name".into(),
                });
            }
            if column.kind.is_categorical() {
                if column.vocabulary.is_empty() {
                    return Err(Error::Schema {
                        column: column.name.clone(),
                        message: "categorical column needs a vocabulary".into(),
                    });
                }
                let mut seen = HashSet::new();
                for value in &column.vocabulary {
                    if !seen.insert(value) {
                        return Err(Error::Schema {
                            column: column.name.clone(),
                            message: format!("duplicate vocabulary value `{value}`"),
                        });
                    }
                }
            }
            if column.bins.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Schema {
                    column: column.name.clone(),
                    message: "bins must be strictly increasing".into(),
                });
            }
        }
        Ok(())
    }

    pub fn label_column(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == ColumnKind::Label)
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Label)
    }

    pub fn sensitive_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind.is_sensitive())
    }

    pub fn require_sensitive(&self) -> Result<()> {
        if self.sensitive_columns().next().is_none() {
            return Err(Error::Schema {
                column: "<sensitive>".into(),
                message: "subgroup inference needs at least one sensitive column".into(),
            });
        }
        Ok(())
    }

    pub fn encoded_names(&self) -> Vec<String> {
        self.feature_columns().flat_map(ColumnSpec::encoded_names).collect()
    }
}
