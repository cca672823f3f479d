//! Experiment files.
//!
//! A file is TOML. Either the top level is one run:
//!
//! ```toml
//! k = 20
//! t = 100
//! method = "aaggff-s"
//! [data]
//! concentration = 0.1
//! ```
//!
//! or it holds `[[run]]` tables, in which case the remaining top-level run
//! keys are shared defaults that each `[[run]]` table overrides (nested
//! `cdf` and `data` tables are merged key by key). Suite keys: `out_dir`
//! (relative to the file), `seeds` (each config runs once per seed,
//! overriding its own `seed`) and a `[report]` table.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use fairagg::federation::FederationConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

const MERGED_TABLES: [&str; 2] = ["cdf", "data"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    /// Emit the per-run plot-data file.
    pub plots: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { plots: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSuite {
    pub configs: Vec<FederationConfig>,
    pub out_dir: PathBuf,
    /// Empty means every config runs once with its own seed.
    pub seeds: Vec<u64>,
    pub report: ReportOptions,
}

/// One (config, seed) pair, with the seed already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub id: String,
    pub config: FederationConfig,
}

impl ExperimentSuite {
    /// Expands configs and seeds into runs, rejecting duplicates.
    pub fn runs(&self) -> Result<Vec<RunSpec>, CliError> {
        let mut runs = Vec::new();
        for (index, config) in self.configs.iter().enumerate() {
            let seeds = if self.seeds.is_empty() { vec![config.seed] } else { self.seeds.clone() };
            for seed in seeds {
                let mut config = config.clone();
                config.seed = seed;
                runs.push(RunSpec { id: run_id(index, &config), config });
            }
        }
        let mut ids = HashSet::new();
        for run in &runs {
            if !ids.insert(run.id.as_str()) {
                return Err(CliError::Config {
                    context: String::new(),
                    source: fairagg::Error::InvalidConfig {
                        field: "name".into(),
                        message: format!("duplicate run `{}`; give each config a distinct name", run.id),
                    },
                });
            }
        }
        let mut pairs = HashSet::new();
        for run in &runs {
            let key = serde_json::to_string(&run.config).expect("config serializes");
            if !pairs.insert(key) {
                return Err(CliError::Config {
                    context: format!("run `{}`: ", run.id),
                    source: fairagg::Error::InvalidConfig {
                        field: "seeds".into(),
                        message: "the same config and seed appear twice".into(),
                    },
                });
            }
        }
        Ok(runs)
    }
}

fn run_id(index: usize, config: &FederationConfig) -> String {
    let base = match &config.name {
        Some(name) => name.clone(),
        None => format!("run{index}-{}", config.method),
    };
    let clean: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{clean}-s{}", config.seed)
}

/// Reads and validates an experiment file.
pub fn parse_config(path: &Path) -> Result<ExperimentSuite, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_owned(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        CliError::Parse { message, .. } => CliError::Parse { path: path.to_owned(), message },
        other => other,
    })
}

/// Parses experiment text; relative `out_dir` values resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentSuite, CliError> {
    let parse_err = |message: String| CliError::Parse { path: PathBuf::new(), message };
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;

    let out_dir = match table.remove("out_dir") {
        None => base.join("fairagg-out"),
        Some(Value::String(s)) => base.join(s),
        Some(_) => return Err(parse_err("`out_dir` must be a string".into())),
    };
    let seeds = match table.remove("seeds") {
        None => Vec::new(),
        Some(v) => Vec::<u64>::deserialize(v).map_err(|e| parse_err(format!("`seeds`: {e}")))?,
    };
    let report = match table.remove("report") {
        None => ReportOptions::default(),
        Some(v) => ReportOptions::deserialize(v).map_err(|e| parse_err(format!("`report`: {e}")))?,
    };

    let tables: Vec<(String, Table)> = match table.remove("run") {
        None => vec![(String::new(), table)],
        Some(Value::Array(items)) => {
            if items.is_empty() {
                return Err(parse_err("`run` must contain at least one table".into()));
            }
            items
                .into_iter()
                .enumerate()
                .map(|(i, item)| match item {
                    Value::Table(run) => Ok((format!("run[{i}]: "), merge(&table, run))),
                    _ => Err(parse_err(format!("run[{i}] must be a table"))),
                })
                .collect::<Result<_, _>>()?
        }
        Some(_) => return Err(parse_err("`run` must be an array of tables ([[run]])".into())),
    };

    let mut configs = Vec::with_capacity(tables.len());
    for (context, run) in tables {
        let config = FederationConfig::deserialize(Value::Table(run)).map_err(|e| parse_err(format!("{context}{}", e.message().trim())))?;
        config.validate().map_err(|source| CliError::Config { context: context.clone(), source })?;
        configs.push(config);
    }
    let suite = ExperimentSuite { configs, out_dir, seeds, report };
    suite.runs()?;
    Ok(suite)
}

fn merge(defaults: &Table, run: Table) -> Table {
    let mut merged = defaults.clone();
    for (key, value) in run {
        match (merged.get_mut(&key), value) {
            (Some(Value::Table(base)), Value::Table(over)) if MERGED_TABLES.contains(&key.as_str()) => {
                base.extend(over);
            }
            (_, value) => {
                merged.insert(key, value);
            }
        }
    }
    merged
}
