//! Configuration, the evaluation loop and report output.

pub mod config;
pub mod eval;
pub mod report;

pub use config::{EvalConfig, NamedBundle, Overrides, SimilarityFilterConfig, TextSource};
pub use eval::{envision_runs, run_eval, score_bundle, score_samples, write_outputs, write_run_records, Evaluation, RunOutcome};
pub use report::{
    aggregate_runs, emit_report, read_report, DatasetMetrics, MetricsReport, ReportFormat, RunReport,
    SampleScore,
};
