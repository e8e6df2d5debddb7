//! Cross-validated experiment runner and report assembly.
//!
//! [`run_experiment`] evaluates each configured (method, template) cell on the
//! held-out split of every fold, averages the fold aggregates, and derives the
//! analyses: best template per method, prompt sensitivity, metric
//! correlations, pairwise overlap of solved samples, ensembles, and error
//! label tallies.

mod analysis;
mod config;
mod report;
mod run;
mod table;

pub use analysis::{
    correlation_report, overlap_table, prompt_sensitivity, CorrelationMatrix, ErrorCategory,
    ErrorLabel, ErrorTally, OverlapTable, SensitivityRow,
};
pub use config::{
    BackendConfig, BackendKind, EngineKind, EnsembleConfig, ExperimentConfig, SearchConfig,
};
pub use report::{
    BestRow, CellAggregates, CellReport, DetailRow, EnsembleReport, ExperimentReport,
    ReportHeader, SearchDetail,
};
pub use run::{build_backend, build_engine, run_experiment, RunOptions};
