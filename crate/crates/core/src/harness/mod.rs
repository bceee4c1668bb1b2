//! Experiment driver: configured grids of incremental runs with JSON and
//! CSV reports, selection timing benchmarks, and storage accounting.

mod bench;
mod config;
mod run;
mod stats;
mod storage;

pub use bench::{bench_csv, bench_matrix, bench_selection, time_selection, BenchConfig, BenchResult};
pub use config::{DatasetConfig, EpochConfig, GridMethod, ModelConfig, RunConfig};
pub use run::{
    grid_cells, run_grid, run_single, summary_csv, write_reports, Cell, CellAggregate, CellReport, RunRecord,
    TaskRecord,
};
pub use stats::{quantile, summarize, Summary};
pub use storage::{mlp_param_count, verify_storage, StoragePreset, StorageReport, StorageRow};
