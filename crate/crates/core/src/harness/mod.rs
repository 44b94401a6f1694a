//! Experiment orchestration: configuration, task construction, seeded
//! training runs, logs, suites and reports.

pub mod config;
pub mod datasets;
pub mod report;
pub mod runlog;
pub mod suites;
pub mod svg;
pub mod sweep;
pub mod train;

pub use config::{Config, DataConfig, DataSource, DiagnosticSchedule, RunConfig, SuiteKeys, TaskRecipe};
pub use datasets::build_tasks;
pub use runlog::RunLog;
pub use train::{log_path, run_experiment, run_experiment_on, run_seed, run_seed_with_params, select};
