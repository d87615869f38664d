//! Metrics, significance testing, and the hyperparameter ablation harness.

mod ablation;
mod metrics;
mod report;
mod ttest;

pub use ablation::{
    ablate, compare_configs, cross_validate, score, train_and_score, validation_split,
    AblationGrid, AblationReport, AblationRow, AxisValues, CellResult, Comparison, DataSplits,
};
pub use metrics::{confusion, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use report::{ablation_csv, ablation_svg, ablation_table, aligned_table, metrics_table};
pub use ttest::{paired_t_test, TTestResult};
