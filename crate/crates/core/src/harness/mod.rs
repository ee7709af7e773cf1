//! Cross-validated training and evaluation, significance tests and the
//! experiment matrix over setups, feature modes, graph modes and convolutions.

mod folds;
mod matrix;
mod metrics;
mod stats;
mod train;

pub use folds::{class_weights, stratified_kfold, FoldSplit};
pub use matrix::{
    attach_significance, cross_validate, prepare_inputs, results_table, run_cell, run_matrix, Cell, ExperimentReport,
    FoldResult, InputMode, MatrixConfig, MatrixReport, MeanMetrics, ModelOptions,
};
pub use metrics::{argmax, compute_metrics, evaluate, predict, Metrics};
pub use stats::{bonferroni_significant, compare_folds, paired_t_test, Significance, ALPHA, TEST_NAME};
pub use train::{train_fold, TrainConfig, TrainOutcome};

#[cfg(test)]
mod tests;
