//! Evaluation statistics and report assembly.

pub mod auroc;
pub mod bootstrap;
pub mod hypothesis;
pub mod report;
pub mod wilcoxon;

pub use auroc::{auroc, auroc_defined};
pub use bootstrap::{bootstrap_ci, MetricResult};
pub use hypothesis::{two_prop_ztest, welch_ttest};
pub use report::{build_report, evaluate_arm, ArmEvaluation, ComparisonResult, EvalConfig, ExperimentReport, OverallMode, Tier};
pub use wilcoxon::wilcoxon_rank_sum;
