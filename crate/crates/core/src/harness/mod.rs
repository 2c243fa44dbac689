//! Phased experiment orchestration: collection under exploration, one
//! estimator fit, then paired online runs across a slice-set change.

mod config;
mod metrics;
mod output;
mod run;

pub use config::{EstimatorConfig, ExperimentConfig, OracleConfig, PhaseConfig, Scale};
pub use metrics::{
    compute_cdf, compute_metrics, CdfRow, EmpiricalCdf, MetricsTable, Phase, SliceRow, SlotLog, SummaryRow,
    ThroughputRow, UtilityRow,
};
pub use output::{emit_outputs, emit_plots, read_csv, read_slot_log, write_csv, write_slot_log, METRICS_FILES};
pub use run::{
    collect, run_experiment, run_online, run_scheme, train_estimator, write_collected, write_model, Collected,
    ExperimentOutput, SchemeRun, Seeds, SolveStat, TraceDump,
};
