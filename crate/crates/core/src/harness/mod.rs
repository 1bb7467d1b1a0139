//! Experiment plumbing: datasets, trials, reports and invariant checks.

pub mod check;
pub mod data;
pub mod trial;

pub use check::{replay_check, run_checks, sketch_check, SuiteResult};
pub use data::{gen_dataset, load_points, parse_points, write_points, GenSpec};
pub use trial::{
    aggregate_path, derive_seed, ordered_stream, run_experiment, run_trial, run_trial_detailed, trial_seed,
    write_output, DataSource, ExperimentOutput, OraclePolicy, OutputFormat, Ratio, RunReport, StreamOrder,
    Summary, TrialRun, TrialSpec, LOWER_ALPHA, TARGET_RATIO,
};
