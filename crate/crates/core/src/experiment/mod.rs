//! Sweeps over arms, noise levels and ranks, their reports, the
//! closed-form oracle, configuration files and checkpoints.

mod checkpoint;
mod config;
mod oracle;
mod report;
mod sweep;

pub use checkpoint::{
    decode_matrix, encode_matrix, read_checkpoint_header, read_matrix_file, write_matrix_file,
    Checkpoint, CheckpointHeader, FORMAT_VERSION, MAGIC,
};
pub use config::{AdapterSettings, ExperimentConfig, SweepSettings, EXPERIMENT_MAX_LR};
pub use oracle::{closed_form_oracle, oracle_for_rank, OracleReport, RIDGE_LAMBDA};
pub use report::{
    emit_report, mean_std, read_report, Aggregate, Arm, Axis, ReportFormat, RunReport, RunRow,
    CSV_HEADER,
};
pub use sweep::{default_values, run_arm, run_sweep, run_sweep_with, SweepOutcome, SweepSpec};
