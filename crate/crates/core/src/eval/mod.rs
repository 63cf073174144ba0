//! Metrics, data splits, experiment orchestration and result tables.

mod experiment;
mod metrics;
mod split;
mod table;

pub use experiment::{parse_methods, run_experiment, ExperimentConfig, Method, MethodResult};
pub use metrics::{maae, maae_report, nrmse, MaaeReport, MIN_NORM};
pub use split::{
    make_sequential_split, make_split, SplitIndices, FIT_LEN, MIN_TRIAL_LEN, TEST_LEN, TRAIN_LEN, VALIDATION_LEN,
};
pub use table::{
    percent_change, results_from_csv, results_to_csv, tabulate, Metric, ResultTable, TableRow, RESULTS_HEADER,
    ROW_ORDER,
};
