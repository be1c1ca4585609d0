//! Experiment engine: configuration, per-client state, the round loop and reports.

pub mod client;
pub mod config;
pub mod engine;
pub mod log;
pub mod report;

pub use client::{prepare_population, ClientState, Population, Provenance};
pub use config::{DataSource, ExperimentConfig, PartitionMode, RmseUnits, Selection, Variant};
pub use engine::{aggregate, evaluate_rmse, local_update, run_experiment, run_local_only, RunOutcome};
pub use log::{read_rounds_csv, write_rounds_csv, Event, RoundLog, CSV_COLUMNS};
pub use report::{emit_reports, plot_from_dir, summarize, VariantSummary};
