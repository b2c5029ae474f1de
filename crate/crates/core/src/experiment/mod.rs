//! Config-driven experiment harness, reports and the horse demo.

pub mod config;
pub mod pegasus;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, LoadedConfig, ReportFormat};
pub use pegasus::{run_pegasus_demo, PegasusDemoResult};
pub use report::{emit_embeddings, emit_report, read_rows_csv, render_markdown, write_rows_csv};
pub use run::{run_experiment, run_experiment_detailed, Mode, ResultRow, ResultTable, RE_ID};
