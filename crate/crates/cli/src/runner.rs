use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fairagg::federation::run;

use crate::error::CliError;
use crate::report::{summarize, write_csv, write_plot, RunLog, Summary};
use crate::suite::{ExperimentSuite, RunSpec};

pub const SUITE_CSV: &str = "suite.csv";

/// Files written for one run.
pub fn run_files(out_dir: &Path, id: &str) -> [PathBuf; 3] {
    [
        out_dir.join(format!("{id}.rounds.jsonl")),
        out_dir.join(format!("{id}.summary.json")),
        out_dir.join(format!("{id}.plot.dat")),
    ]
}

#[derive(Debug)]
pub struct SuiteReport {
    pub summaries: Vec<Summary>,
    pub files: Vec<PathBuf>,
}

impl SuiteReport {
    pub fn failed(&self) -> usize {
        self.summaries.iter().filter(|s| s.status != "ok").count()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output { path: path.to_owned(), source })
}

fn execute(spec: &RunSpec) -> RunLog {
    let started = Instant::now();
    let (records, outcome) = match run(&spec.config) {
        Ok(out) => (out.records, Ok(out.evaluation)),
        Err(aborted) => {
            tracing::error!(run = %spec.id, error = %aborted.error, "run failed");
            (aborted.records, Err(aborted.error.to_string()))
        }
    };
    tracing::info!(run = %spec.id, rounds = records.len(), elapsed_ms = started.elapsed().as_millis() as u64, "run finished");
    RunLog { run_id: spec.id.clone(), config: spec.config.clone(), records, outcome }
}

fn write_run(log: &RunLog, out_dir: &Path, plots: bool) -> Result<(Summary, Vec<PathBuf>), CliError> {
    let [rounds, summary_path, plot] = run_files(out_dir, &log.run_id);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Output { path, source }
    };
    log.write_jsonl(create(&rounds)?).map_err(io(&rounds))?;
    let summary = summarize(log);
    let mut w = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Output { path: summary_path.clone(), source: e.into() })?;
    std::io::Write::write_all(&mut w, b"\n").map_err(io(&summary_path))?;
    let mut files = vec![rounds, summary_path];
    if plots {
        write_plot(log, create(&plot)?).map_err(io(&plot))?;
        files.push(plot);
    }
    Ok((summary, files))
}

/// Runs every (config, seed) pair and writes the per-run files and the
/// suite CSV. Runs proceed in parallel when the `parallel` feature is on;
/// the files do not depend on the schedule.
pub fn run_suite(suite: &ExperimentSuite) -> Result<SuiteReport, CliError> {
    let runs = suite.runs()?;
    std::fs::create_dir_all(&suite.out_dir).map_err(|source| CliError::Output { path: suite.out_dir.clone(), source })?;
    let results = fairagg::exec::map(&runs, |spec| write_run(&execute(spec), &suite.out_dir, suite.report.plots));
    let mut summaries = Vec::with_capacity(runs.len());
    let mut files = Vec::new();
    for result in results {
        let (summary, written) = result?;
        summaries.push(summary);
        files.extend(written);
    }
    let csv_path = suite.out_dir.join(SUITE_CSV);
    write_csv(&summaries, create(&csv_path)?).map_err(|e| CliError::Output {
        path: csv_path.clone(),
        source: std::io::Error::other(e),
    })?;
    files.push(csv_path);
    Ok(SuiteReport { summaries, files })
}
