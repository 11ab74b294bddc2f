//! Segmentation metrics, ROC analysis and the paired t-test.

mod confusion;
mod roc;
mod stats;

pub use confusion::{
    accuracy, basic_metrics, confusion, mcc, sensitivity, specificity, BasicMetrics, ConfusionMatrix,
};
pub use roc::{auc, roc, roc_from_sweeps, RocCurve, RocPoint, ThresholdSweep, THRESHOLD_LEVELS};
pub use stats::{paired_t_test, t_cdf, t_critical, TTestResult, SIGNIFICANCE_LEVEL};

pub(crate) use confusion::ensure_binary;
