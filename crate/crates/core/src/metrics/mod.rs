//! Classification quality, group fairness gaps, bootstrap intervals and
//! significance tests.

mod classification;
mod fairness;
mod report;
mod stats;

pub use classification::{accuracy, classification_metrics, macro_f1, per_class_scores, roc_auc, ClassScores, OverallMetrics};
pub use fairness::{dp_difference, eo_difference, subgroup_accuracy, OddsGap, ParityGap};
pub use report::{
    compare_disparity, fairness_report, mean_disparity, AttributeFairness, BootstrapSettings, ClassFairness, Disparity,
    FairnessReport, OverallIntervals, SignificanceRecord,
};
pub use stats::{
    bootstrap_ci, bootstrap_draws, paired_bootstrap_ttest, resample_indices, BootstrapDraws, ConfidenceInterval,
    PairedTTest, MAX_REDRAWS, MIN_RESAMPLES,
};
