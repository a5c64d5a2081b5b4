use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::classification::{accuracy, classification_metrics, macro_f1, OverallMetrics};
use super::fairness::{dp_difference, dp_gap, eo_difference, eo_gap, subgroup_accuracy, OddsGap, ParityGap};
use super::stats::{bootstrap_ci, bootstrap_draws, paired_bootstrap_ttest, ConfidenceInterval, PairedTTest};
use crate::error::{Error, Result};
use crate::ingest::SensitiveAttribute;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapSettings {
    pub fn new(n_resamples: usize, seed: u64) -> Self {
        Self {
            n_resamples,
            level: 0.95,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFairness {
    pub class: usize,
    pub dp: ParityGap,
    pub eo: OddsGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFairness {
    pub attribute: String,
    pub group_names: Vec<String>,
    pub per_class: Vec<ClassFairness>,
    pub dp_mean: f64,
    pub eo_mean: f64,
    pub dp_max: f64,
    pub eo_max: f64,
    pub group_accuracy: Vec<Option<f64>>,
    pub dp_mean_ci: Option<ConfidenceInterval>,
    pub eo_mean_ci: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallIntervals {
    pub accuracy: ConfidenceInterval,
    pub macro_f1: ConfidenceInterval,
    pub macro_auroc: Option<ConfidenceInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disparity {
    DemographicParity,
    EqualizedOdds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRecord {
    pub attribute: String,
    pub disparity: Disparity,
    pub baseline: String,
    pub candidate: String,
    pub n_resamples: usize,
    pub seed: u64,
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub n_rows: usize,
    pub num_classes: usize,
    pub overall: OverallMetrics,
    pub overall_ci: Option<OverallIntervals>,
    pub attributes: Vec<AttributeFairness>,
    pub bootstrap: Option<BootstrapSettings>,
    /// Set when the report was built without bootstrap resampling.
    pub intervals_omitted: bool,
    pub significance: Vec<SignificanceRecord>,
}

/// Mean and max over classes of the DP and EO gaps, in that order.
fn summaries(y: &[usize], pred: &[usize], groups: &[usize], num_groups: usize, num_classes: usize) -> Result<[f64; 4]> {
    let mut dp = Vec::with_capacity(num_classes);
    let mut eo = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        dp.push(dp_gap(pred, groups, num_groups, c)?.value);
        eo.push(eo_gap(y, pred, groups, num_groups, c)?.value);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok([mean(&dp), mean(&eo), max(&dp), max(&eo)])
}

/// Mean over classes of the chosen disparity.
pub fn mean_disparity(
    kind: Disparity,
    y: &[usize],
    pred: &[usize],
    groups: &[usize],
    num_groups: usize,
    num_classes: usize,
) -> Result<f64> {
    let s = summaries(y, pred, groups, num_groups, num_classes)?;
    Ok(match kind {
        Disparity::DemographicParity => s[0],
        Disparity::EqualizedOdds => s[1],
    })
}

fn pick<T: Copy>(values: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&i| values[i]).collect()
}

fn check_attribute(attr: &SensitiveAttribute, n: usize) -> Result<()> {
    if attr.codes.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!("sensitive attribute {}", attr.name),
            expected: n,
            found: attr.codes.len(),
        });
    }
    Ok(())
}

/// Builds the full report. `attributes` must be aligned with `y`.
pub fn fairness_report(
    y: &[usize],
    pred: &[usize],
    proba: &Array2<f64>,
    attributes: &[SensitiveAttribute],
    bootstrap: Option<BootstrapSettings>,
) -> Result<FairnessReport> {
    let overall = classification_metrics(y, pred, proba)?;
    let num_classes = proba.ncols();
    let n = y.len();
    let mut reports = Vec::with_capacity(attributes.len());
    for attr in attributes {
        check_attribute(attr, n)?;
        let k = attr.group_names.len();
        let mut per_class = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            per_class.push(ClassFairness {
                class: c,
                dp: dp_difference(pred, &attr.codes, k, c)?,
                eo: eo_difference(y, pred, &attr.codes, k, c)?,
            });
        }
        let [dp_mean, eo_mean, dp_max, eo_max] = summaries(y, pred, &attr.codes, k, num_classes)?;
        let (dp_mean_ci, eo_mean_ci) = match bootstrap {
            Some(b) => {
                let ci = |slot: usize| {
                    bootstrap_ci(
                            |rows| {
                                let codes = pick(&attr.codes, rows);
                                summaries(&pick(y, rows), &pick(pred, rows), &codes, k, num_classes)
                                    .ok()
                                    .map(|s| s[slot])
                            },
                            n,
                            b.level,
                            b.n_resamples,
                            b.seed,
                        )
                };
                (Some(ci(0)?), Some(ci(1)?))
            }
            None => (None, None),
        };
        reports.push(AttributeFairness {
            attribute: attr.name.clone(),
            group_names: attr.group_names.clone(),
            per_class,
            dp_mean,
            eo_mean,
            dp_max,
            eo_max,
            group_accuracy: subgroup_accuracy(y, pred, &attr.codes, k, num_classes)?,
            dp_mean_ci,
            eo_mean_ci,
        });
    }
    let overall_ci = match bootstrap {
        Some(b) => Some((|| -> Result<OverallIntervals> {
            let acc = bootstrap_ci(|r| Some(accuracy(&pick(y, r), &pick(pred, r))), n, b.level, b.n_resamples, b.seed)?;
            let f1 = bootstrap_ci(
                |r| Some(macro_f1(&pick(y, r), &pick(pred, r), num_classes)),
                n,
                b.level,
                b.n_resamples,
                b.seed,
            )?;
            let auc = match overall.macro_auroc {
                Some(_) => Some(bootstrap_ci(
                    |r| {
                        let p = proba.select(Axis(0), r);
                        let yy = pick(y, r);
                        classification_metrics(&yy, &pick(pred, r), &p).ok()?.macro_auroc
                    },
                    n,
                    b.level,
                    b.n_resamples,
                    b.seed,
                )?),
                None => None,
            };
            Ok(OverallIntervals {
                accuracy: acc,
                macro_f1: f1,
                macro_auroc: auc,
            })
        })()?),
        None => None,
    };
    Ok(FairnessReport {
        n_rows: n,
        num_classes,
        overall,
        overall_ci,
        attributes: reports,
        bootstrap,
        intervals_omitted: bootstrap.is_none(),
        significance: Vec::new(),
    })
}

/// Paired bootstrap comparison of two prediction vectors on the same rows:
/// both disparities are computed on identical resamples, then t-tested.
#[allow(clippy::too_many_arguments)]
pub fn compare_disparity(
    kind: Disparity,
    y: &[usize],
    baseline: (&str, &[usize]),
    candidate: (&str, &[usize]),
    attr: &SensitiveAttribute,
    num_classes: usize,
    settings: BootstrapSettings,
) -> Result<SignificanceRecord> {
    check_attribute(attr, y.len())?;
    let k = attr.group_names.len();
    let draws = bootstrap_draws(
            |rows| {
                let yy = pick(y, rows);
                let codes = pick(&attr.codes, rows);
                let a = mean_disparity(kind, &yy, &pick(baseline.1, rows), &codes, k, num_classes).ok()?;
                let b = mean_disparity(kind, &yy, &pick(candidate.1, rows), &codes, k, num_classes).ok()?;
                Some((a, b))
            },
            y.len(),
            settings.n_resamples,
            settings.seed,
        )?;
    let (a, b): (Vec<f64>, Vec<f64>) = draws.values.into_iter().unzip();
    Ok(SignificanceRecord {
        attribute: attr.name.clone(),
        disparity: kind,
        baseline: baseline.0.to_string(),
        candidate: candidate.0.to_string(),
        n_resamples: settings.n_resamples,
        seed: settings.seed,
        test: paired_bootstrap_ttest(&a, &b)?,
    })
}

fn push_row(out: &mut String, cells: [&str; 4], value: f64, ci: Option<&ConfidenceInterval>) {
    let (lo, hi) = ci.map_or((String::new(), String::new()), |c| (c.lower.to_string(), c.upper.to_string()));
    let _ = writeln!(out, "{},{},{},{},{value},{lo},{hi}", cells[0], cells[1], cells[2], cells[3]);
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

impl FairnessReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format table: `section,attribute,key,metric,value,lower,upper`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,attribute,key,metric,value,lower,upper\n");
        let ci = self.overall_ci.as_ref();
        let o = &self.overall;
        push_row(&mut out, ["overall", "", "all", "accuracy"], o.accuracy, ci.map(|c| &c.accuracy));
        push_row(&mut out, ["overall", "", "all", "macro_precision"], o.macro_precision, None);
        push_row(&mut out, ["overall", "", "all", "macro_recall"], o.macro_recall, None);
        push_row(&mut out, ["overall", "", "all", "macro_f1"], o.macro_f1, ci.map(|c| &c.macro_f1));
        push_row(
            &mut out,
            ["overall", "", "all", "macro_auroc"],
            opt(o.macro_auroc),
            ci.and_then(|c| c.macro_auroc.as_ref()),
        );
        for (c, s) in o.per_class.iter().enumerate() {
            let key = format!("class={c}");
            push_row(&mut out, ["overall", "", &key, "precision"], s.precision, None);
            push_row(&mut out, ["overall", "", &key, "recall"], s.recall, None);
            push_row(&mut out, ["overall", "", &key, "f1"], s.f1, None);
            push_row(&mut out, ["overall", "", &key, "auroc"], opt(o.per_class_auc[c]), None);
        }
        for a in &self.attributes {
            for (g, name) in a.group_names.iter().enumerate() {
                push_row(&mut out, ["group_accuracy", &a.attribute, name, "accuracy"], opt(a.group_accuracy[g]), None);
            }
            for cf in &a.per_class {
                let key = format!("class={}", cf.class);
                push_row(&mut out, ["fairness", &a.attribute, &key, "dp_difference"], cf.dp.value, None);
                push_row(&mut out, ["fairness", &a.attribute, &key, "eo_difference"], cf.eo.value, None);
                push_row(&mut out, ["fairness", &a.attribute, &key, "tpr_gap"], cf.eo.tpr_gap, None);
                push_row(&mut out, ["fairness", &a.attribute, &key, "fpr_gap"], cf.eo.fpr_gap, None);
            }
            push_row(&mut out, ["fairness", &a.attribute, "mean", "dp_difference"], a.dp_mean, a.dp_mean_ci.as_ref());
            push_row(&mut out, ["fairness", &a.attribute, "mean", "eo_difference"], a.eo_mean, a.eo_mean_ci.as_ref());
            push_row(&mut out, ["fairness", &a.attribute, "max", "dp_difference"], a.dp_max, None);
            push_row(&mut out, ["fairness", &a.attribute, "max", "eo_difference"], a.eo_max, None);
        }
        for s in &self.significance {
            let key = format!("{} vs {}", s.candidate, s.baseline);
            let metric = match s.disparity {
                Disparity::DemographicParity => "dp",
                Disparity::EqualizedOdds => "eo",
            };
            push_row(&mut out, ["significance", &s.attribute, &key, &format!("{metric}_t")], s.test.t, None);
            push_row(&mut out, ["significance", &s.attribute, &key, &format!("{metric}_p")], s.test.p, None);
        }
        out
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<usize>, Vec<usize>, Array2<f64>, SensitiveAttribute) {
        let y = vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3];
        let pred = vec![0, 1, 2, 2, 0, 0, 2, 3, 1, 1, 2, 3];
        let mut proba = Array2::from_elem((12, 4), 0.1);
        for (i, &p) in pred.iter().enumerate() {
            proba[[i, p]] = 0.7;
        }
        let attr = SensitiveAttribute {
            name: "sex".into(),
            group_names: vec!["M".into(), "F".into()],
            codes: (0..12).map(|i| i % 2).collect(),
        };
        (y, pred, proba, attr)
    }

    #[test]
    fn report_without_bootstrap_flags_missing_intervals() {
        let (y, pred, proba, attr) = fixture();
        let r = fairness_report(&y, &pred, &proba, &[attr], None).unwrap();
        assert!(r.intervals_omitted);
        assert!(r.overall_ci.is_none());
        assert_eq!(r.attributes[0].per_class.len(), 4);
        let csv = r.to_csv();
        assert!(csv.lines().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn bootstrap_intervals_contain_points() {
        let (y, pred, proba, attr) = fixture();
        let r = fairness_report(&y, &pred, &proba, &[attr], Some(BootstrapSettings::new(200, 4))).unwrap();
        let a = &r.attributes[0];
        for (point, ci) in [(a.dp_mean, a.dp_mean_ci.as_ref()), (a.eo_mean, a.eo_mean_ci.as_ref())] {
            let ci = ci.unwrap();
            assert!(ci.lower <= point && point <= ci.upper);
        }
        assert!(!r.intervals_omitted);
    }

    #[test]
    fn comparing_a_model_with_itself() {
        let (y, pred, _, attr) = fixture();
        let rec = compare_disparity(
            Disparity::EqualizedOdds,
            &y,
            ("a", &pred),
            ("b", &pred),
            &attr,
            4,
            BootstrapSettings::new(100, 0),
        )
        .unwrap();
        assert_eq!(rec.test.p, 1.0);
    }
}
