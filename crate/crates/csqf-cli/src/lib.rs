//! Experiment harness around [`csqf_core`]: spec files, batch execution
//! with mandatory replay verification, and plot-data export.
//!
//! The binary (`csqf`) is a thin shell over this library so integration
//! tests drive the same code paths in-process. Exit codes: 0 success,
//! 2 bad input (spec/config/files), 3 replay verification failure.

use std::path::PathBuf;

use thiserror::Error;

pub mod plot;
pub mod runner;
pub mod spec;

pub use plot::{emit_plot_data, AggregateRef, PLOT_FILES};
pub use runner::{
    run_experiment, verify_files, RunOptions, RunRecord, RunSummary, ScheduleEntry,
    VerifyOutcome, AGGREGATE_COLUMNS, TIMING_COLUMNS,
};
pub use spec::{
    default_switch_config, AlgoChoice, ErParams, ExperimentSpec, ProfileParams, TabuKnobs,
    TopologySource, TrafficSource,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Anything wrong with an input before running: spec fields, config
    /// validation, unreadable or inconsistent files.
    #[error("{0}")]
    Spec(String),
    #[error("{path}: {detail}")]
    Io { path: PathBuf, detail: String },
    /// An aggregate CSV without usable data rows.
    #[error("aggregate has no data rows (or wrong columns)")]
    MalformedAggregate,
}

/// Exit code for input problems; verification failures use
/// [`EXIT_VERIFICATION`] and are decided by the caller from run results.
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;
