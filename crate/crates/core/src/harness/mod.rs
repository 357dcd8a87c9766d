//! Experiment orchestration: curriculum and uniform arms, compute-normalized
//! alignment, metrics and report rendering.

mod compare;
mod config;
mod metrics;
mod report;
mod run;

pub use compare::{baseline_config, compare_runs, normalized_compare, summarize, AlignedRow, PairedRun, PairedSummary};
pub use config::{ExperimentConfig, Ratio, Seeds, CONFIG_SCHEMA_VERSION};
pub use metrics::{
    ema, final_accuracy, read_csv, sparse_ema, write_csv, MetricsRecord, MetricsWriter, SmoothedSeries, CSV_COLUMNS,
};
pub use report::emit_report;
pub use run::{
    run_experiment, run_experiment_to, run_with_source, CurriculumSource, InProcessTeacher, Mode, RemoteTeacher,
    RunContext, RunOutput, Served, UniformSource,
};
