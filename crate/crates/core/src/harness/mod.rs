//! Configuration, orchestration and persistence of experiments.

pub mod config;
pub mod experiment;
pub mod record;

pub use config::{parse_config, parse_with_overrides, ExperimentConfig};
pub use experiment::{bounds_report, prepare, run_experiment, sweep, theory_constants, topology_report, Derived, Experiment};
pub use record::{read_record, rows_from_csv, rows_to_csv, write_record, Format, RunRecord};
