//! Experiment grids: configuration, execution and result tables.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str, DatasetSpec, ExperimentGrid};
pub use report::{emit_table, records_to_csv, records_to_markdown, render, summarize, SummaryRow, TableFormat};
pub use run::{cell_seed, fit_cell_history, load_datasets, run_grid, run_grid_on, split_for, ResultRecord};
