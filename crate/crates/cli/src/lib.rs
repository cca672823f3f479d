//! Batch runner: experiment files in, round logs, summaries, plot data and a
//! suite CSV out.

mod error;
mod report;
mod runner;
mod suite;

pub use error::CliError;
pub use report::{summarize, write_csv, write_plot, FinalMetrics, LogLine, RegretSummary, RunLog, Summary, CSV_HEADER, SCHEMA_VERSION, TAIL_FRACTION};
pub use runner::{run_files, run_suite, SuiteReport, SUITE_CSV};
pub use suite::{parse_config, parse_config_str, ExperimentSuite, ReportOptions, RunSpec};
