use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainingConfig, TrainingLog};
use crate::error::{Error, Result};
use crate::fairmtl::{predict_labels, FairMtlParams};
use crate::ingest::{Cohort, Split};
use crate::metrics::{classification_metrics, compare_disparity, mean_disparity, BootstrapSettings, Disparity, SignificanceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoReweighting,
    NoSharedLayers,
    NoTaskHeads,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoReweighting, Variant::NoSharedLayers, Variant::NoTaskHeads];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoReweighting => "no-reweighting",
            Variant::NoSharedLayers => "no-shared-layers",
            Variant::NoTaskHeads => "no-task-heads",
        }
    }

    /// `base` with this variant's component switched off.
    pub fn apply(self, base: &TrainingConfig) -> TrainingConfig {
        let mut config = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoReweighting => config.ablation.reweighting = false,
            Variant::NoSharedLayers => config.ablation.shared_layers = false,
            Variant::NoTaskHeads => config.ablation.task_heads = false,
        }
        config
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ablation variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationOptions {
    pub parallel: bool,
    /// Paired bootstrap tests of each variant against the full model.
    pub bootstrap: Option<BootstrapSettings>,
}

impl Default for AblationOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: Variant,
    pub params: FairMtlParams,
    pub log: TrainingLog,
    pub test_pred: Vec<usize>,
    pub test_proba: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    pub auc: Option<f64>,
    /// Class-averaged DP gap per attribute, in `attributes` order.
    pub dp: Vec<f64>,
    /// Class-averaged EO gap per attribute.
    pub eo: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    pub attributes: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub significance: Vec<SignificanceRecord>,
    #[serde(skip)]
    pub runs: Vec<AblationRun>,
}

impl AblationResult {
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["accuracy".to_string(), "auc".to_string()];
        for a in &self.attributes {
            cols.push(format!("dp_{a}"));
            cols.push(format!("eo_{a}"));
        }
        cols
    }

    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("variant,{}\n", self.columns().join(","));
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.variant.as_str(), r.accuracy, r.auc.unwrap_or(f64::NAN));
            for (dp, eo) in r.dp.iter().zip(&r.eo) {
                let _ = write!(out, ",{dp},{eo}");
            }
            out.push('\n');
        }
        out
    }
}

fn run_variant(cohort: &Cohort, routing: &[usize], k: usize, base: &TrainingConfig, variant: Variant) -> Result<AblationRun> {
    let config = variant.apply(base);
    let (params, log) = train(cohort, routing, k, &config)?;
    let test = cohort.rows(Split::Test);
    let z = config.effective_routing(routing);
    let z_test: Vec<usize> = test.iter().map(|&i| z[i]).collect();
    let test_proba = params.predict_proba(&cohort.select_x(&test), &z_test)?;
    Ok(AblationRun {
        variant,
        test_pred: predict_labels(&test_proba),
        test_proba,
        params,
        log,
    })
}

/// Trains the full model and each single-component ablation, then scores
/// every variant on the test split.
pub fn run_ablation(
    cohort: &Cohort,
    routing: &[usize],
    k: usize,
    base: &TrainingConfig,
    options: AblationOptions,
) -> Result<AblationResult> {
    base.validate()?;
    let test = cohort.rows(Split::Test);
    if test.is_empty() {
        return Err(Error::Empty("cohort has no test rows".into()));
    }
    let runs: Vec<AblationRun> = if options.parallel {
        Variant::ALL
            .par_iter()
            .map(|&v| run_variant(cohort, routing, k, base, v))
            .collect::<Result<_>>()?
    } else {
        Variant::ALL
            .iter()
            .map(|&v| run_variant(cohort, routing, k, base, v))
            .collect::<Result<_>>()?
    };
    let y = cohort.select_y(&test);
    let attributes: Vec<_> = cohort.sensitive_attributes().into_iter().map(|a| a.select(&test)).collect();
    let c = cohort.num_classes();
    let mut rows = Vec::with_capacity(runs.len());
    for run in &runs {
        let overall = classification_metrics(&y, &run.test_pred, &run.test_proba)?;
        let mut dp = Vec::new();
        let mut eo = Vec::new();
        for a in &attributes {
            let groups = a.group_names.len();
            dp.push(mean_disparity(Disparity::DemographicParity, &y, &run.test_pred, &a.codes, groups, c)?);
            eo.push(mean_disparity(Disparity::EqualizedOdds, &y, &run.test_pred, &a.codes, groups, c)?);
        }
        rows.push(AblationRow {
            variant: run.variant,
            accuracy: overall.accuracy,
            auc: overall.macro_auroc,
            dp,
            eo,
        });
    }
    let mut significance = Vec::new();
    if let Some(settings) = options.bootstrap {
        let full = &runs[0];
        for run in &runs[1..] {
            for a in &attributes {
                significance.push(compare_disparity(
                    Disparity::EqualizedOdds,
                    &y,
                    (full.variant.as_str(), &full.test_pred),
                    (run.variant.as_str(), &run.test_pred),
                    a,
                    c,
                    settings,
                )?);
            }
        }
    }
    Ok(AblationResult {
        attributes: attributes.into_iter().map(|a| a.name).collect(),
        rows,
        significance,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("none".parse::<Variant>().is_err());
    }

    #[test]
    fn each_variant_switches_one_flag() {
        let base = TrainingConfig::default();
        assert_eq!(Variant::Full.apply(&base), base);
        assert!(!Variant::NoReweighting.apply(&base).ablation.reweighting);
        assert!(!Variant::NoSharedLayers.apply(&base).ablation.shared_layers);
        assert!(!Variant::NoTaskHeads.apply(&base).ablation.task_heads);
    }
}
