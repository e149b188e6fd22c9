//! Evaluation harness: per-developer chronological splits, accuracy@n,
//! cross-validated choice of the unlabeled weight, and the experiment and
//! weight-sweep runners.

mod experiment;
mod lambda;
mod metrics;
mod report;
mod split;

pub use experiment::{
    choose_lambda, prepare_from_corpus, run_experiment, run_on, run_sweep, train_method,
    ExperimentConfig, ExperimentData, LambdaChoice, Method,
};
pub use lambda::{default_lambda_grid, parse_lambda_grid, select_lambda, LambdaSelection};
pub use metrics::{accuracy_at_n, accuracy_curve, true_rank};
pub use report::{
    validate_report_json, validate_sweep_json, DatasetInfo, EvaluationReport, MethodResult,
    SweepReport, SweepSeries, REPORT_FORMAT_VERSION,
};
pub use split::{split_dataset, split_items, Split, SplitItem, SplitMode};
