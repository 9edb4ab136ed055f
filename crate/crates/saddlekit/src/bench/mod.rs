//! Experiment harness: configuration files, parameter sweeps, iteration
//! tables, per-run residual histories, and comparisons against the shipped
//! reference tables.

mod config;
pub mod reference;
mod runner;
mod table;

pub use config::{parameter_roles, ExperimentConfig, TableFormat};
pub use runner::{
    build_preconditioner, build_system, run_cell, run_experiment, write_outputs,
    ExperimentOutcome, RunRecord,
};
pub use table::{
    compare_tables, format_param, CellDeviation, CellOutcome, IterationTable, TableDiff, TableRow,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error (line {line}): {message}")]
    Config { line: usize, message: String },
    #[error("table parse error (line {line}): {message}")]
    TableParse { line: usize, message: String },
    #[error("tables have different shapes")]
    TableShapeMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
