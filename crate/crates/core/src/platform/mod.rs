//! File ingestion, the rank-once/test-many pipeline, and report output.

mod analyze;
mod io;

pub use analyze::{analyze, run_analysis, AnalysisReport, AnalysisRequest, OutputFormat, PhaseLog, ReportRow};
pub use io::{export_ranks, import_ranks, load_assignments, load_metrics, parse_assignments, parse_metrics};
