use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairagg_cli::{parse_config, run_suite, CliError};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "fairagg", version, about = "Run fairness-aware federated aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (config, seed) pair of an experiment file.
    Run {
        /// Experiment file (TOML).
        config: PathBuf,
        /// Output directory; overrides `out_dir` from the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds; overrides `seeds` from the file.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Parse and validate the file, then exit.
        #[arg(long)]
        validate_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("FAIRAGG_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let Command::Run { config, out, seeds, jobs, validate_only } = command;
    let mut suite = parse_config(&config)?;
    if let Some(out) = out {
        suite.out_dir = out;
    }
    if let Some(seeds) = seeds {
        suite.seeds = seeds;
    }
    let runs = suite.runs()?;
    if validate_only {
        println!("{}: {} run(s) valid", config.display(), runs.len());
        return Ok(());
    }

    let report = with_threads(jobs, || run_suite(&suite))?;
    for s in &report.summaries {
        println!("{} {}", s.run_id, s.status);
    }
    println!("wrote {} files to {}", report.files.len(), suite.out_dir.display());
    match report.failed() {
        0 => Ok(()),
        failed => Err(CliError::RunsFailed { failed, total: report.summaries.len() }),
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    if jobs.is_some_and(|n| n > 1) {
        tracing::warn!("built without the parallel feature; running sequentially");
    }
    f()
}
