//! Experiment configuration, runners, and result emission.

pub mod config;
pub mod emit;
pub mod experiments;

pub use config::{derive_seed, BerSweep, CompareSettings, ExperimentConfig, ExperimentKind, RateGrid, SEED_ENV};
pub use emit::{emit_results, read_csv, read_json, write_csv, write_json, Metadata, OutputFormat, ResultRow};
pub use experiments::{
    run, run_ber, run_bound_table, run_rate_sweep, run_train_compare, AccuracyRow, BerRow, BoundRow,
    ExperimentOutput, RateRow, RateSummary, TraceRow,
};
