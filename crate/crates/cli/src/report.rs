//! Output files of a run and of a suite.
//!
//! Per run `<id>`:
//! - `<id>.rounds.jsonl`: a `header` line with the config, one `round` line
//!   per round, then an `evaluation` line (or an `error` line if the run
//!   aborted). This log is the source of truth; [`summarize`] needs nothing else.
//! - `<id>.summary.json`: final fairness metrics, regret and its bound.
//! - `<id>.plot.dat`: two whitespace-separated blocks, round vs cumulative
//!   objective and round vs decision entropy, separated by two blank lines.
//!
//! Per suite: `suite.csv` with one row per run. Gini is raw in JSON and
//! multiplied by 100 in the CSV.

use std::io::{BufRead, Write};

use fairagg::aggregators::Method;
use fairagg::decision::{lipschitz_dr, lipschitz_full};
use fairagg::federation::{Evaluation, FederationConfig, RoundRecord};
use fairagg::metrics::{
    accuracy_parity_gap, cumulative_objective, cumulative_objective_curve, ftrl_regret_bound, gini, ons_regret_bound,
    regret, worst_best, PerformanceDistribution,
};
use fairagg::transform::Setting;
use fairagg::SimplexVector;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        schema_version: u32,
        run_id: String,
        config: FederationConfig,
    },
    Round {
        schema_version: u32,
        #[serde(flatten)]
        record: RoundRecord,
    },
    Evaluation {
        schema_version: u32,
        #[serde(flatten)]
        evaluation: Evaluation,
    },
    Error {
        schema_version: u32,
        message: String,
    },
}

/// Everything a run produced, as written to or read back from its round log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_id: String,
    pub config: FederationConfig,
    pub records: Vec<RoundRecord>,
    pub outcome: Result<Evaluation, String>,
}

impl RunLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |l: &LogLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")
        };
        line(&LogLine::Header {
            schema_version: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            config: self.config.clone(),
        })?;
        for record in &self.records {
            line(&LogLine::Round { schema_version: SCHEMA_VERSION, record: record.clone() })?;
        }
        match &self.outcome {
            Ok(evaluation) => line(&LogLine::Evaluation { schema_version: SCHEMA_VERSION, evaluation: evaluation.clone() }),
            Err(message) => line(&LogLine::Error { schema_version: SCHEMA_VERSION, message: message.clone() }),
        }
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, String> {
        let mut header = None;
        let mut records = Vec::new();
        let mut outcome = None;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?;
            match parsed {
                LogLine::Header { run_id, config, .. } => header = Some((run_id, config)),
                LogLine::Round { record, .. } => records.push(record),
                LogLine::Evaluation { evaluation, .. } => outcome = Some(Ok(evaluation)),
                LogLine::Error { message, .. } => outcome = Some(Err(message)),
            }
        }
        let (run_id, config) = header.ok_or("missing header line")?;
        let outcome = outcome.ok_or("missing final evaluation or error line")?;
        Ok(RunLog { run_id, config, records, outcome })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub average: f64,
    pub worst10: f64,
    pub best10: f64,
    pub gini: Option<f64>,
    pub parity_gap: f64,
    pub mean_test_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    /// Regret on the responses the strategy learned from (doubly robust
    /// completions across devices).
    pub value: Option<f64>,
    /// Regret on the observed responses, unobserved clients counted as zero.
    pub observed: Option<f64>,
    pub lipschitz: Option<f64>,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub run_id: String,
    pub method: Method,
    pub setting: Setting,
    pub k: usize,
    pub t: usize,
    pub c: f64,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub rounds_completed: usize,
    pub cumulative_objective: f64,
    pub final_decision_entropy: Option<f64>,
    pub metrics: Option<FinalMetrics>,
    pub regret: RegretSummary,
}

fn final_metrics(evaluation: &Evaluation) -> Option<FinalMetrics> {
    let accuracy = PerformanceDistribution::new(evaluation.accuracy.clone()).ok()?;
    let (worst10, best10) = worst_best(&accuracy, TAIL_FRACTION).ok()?;
    Some(FinalMetrics {
        average: accuracy.mean(),
        worst10,
        best10,
        gini: gini(&accuracy).ok(),
        parity_gap: accuracy_parity_gap(&accuracy),
        mean_test_loss: evaluation.loss.iter().sum::<f64>() / evaluation.loss.len() as f64,
    })
}

fn bound_for(config: &FederationConfig, records: &[RoundRecord]) -> Option<(f64, f64)> {
    let range = config.response_range().ok()?;
    let t = records.len();
    match config.method {
        Method::AaggffS => {
            let l = lipschitz_full(&range);
            Some((l, ons_regret_bound(config.k, t, l)))
        }
        Method::AaggffD => {
            let c = config.clients_per_round() as f64 / config.k as f64;
            let l = lipschitz_dr(&range, c);
            Some((l, ftrl_regret_bound(config.k, t, l)))
        }
        _ => None,
    }
}

fn regret_summary(log: &RunLog) -> RegretSummary {
    let mut summary = RegretSummary {
        value: None,
        observed: None,
        lipschitz: None,
        bound: None,
        bound_satisfied: None,
        error: None,
    };
    if log.records.is_empty() {
        return summary;
    }
    let played: Result<Vec<SimplexVector>, _> =
        log.records.iter().map(|r| SimplexVector::new(r.played.clone())).collect();
    let played = match played {
        Ok(p) => p,
        Err(e) => {
            summary.error = Some(e.to_string());
            return summary;
        }
    };
    let full: Vec<Vec<f64>> = log.records.iter().map(|r| r.full_response.clone()).collect();
    let observed: Vec<Vec<f64>> = log
        .records
        .iter()
        .map(|r| {
            let mut v = vec![0.0; log.config.k];
            r.sampled.iter().zip(&r.responses).for_each(|(&i, &x)| v[i] = x);
            v
        })
        .collect();
    match regret(&played, &full) {
        Ok(v) => summary.value = Some(v),
        Err(e) => summary.error = Some(e.to_string()),
    }
    summary.observed = regret(&played, &observed).ok();
    if let Some((l, bound)) = bound_for(&log.config, &log.records) {
        summary.lipschitz = Some(l);
        summary.bound = Some(bound);
        summary.bound_satisfied = summary.value.map(|v| v <= bound);
    }
    summary
}

/// Computes the run summary from the round log alone.
pub fn summarize(log: &RunLog) -> Summary {
    let c = &log.config;
    let (status, error, metrics) = match &log.outcome {
        Ok(evaluation) => ("ok", None, final_metrics(evaluation)),
        Err(message) => ("failed", Some(message.clone()), None),
    };
    Summary {
        schema_version: SCHEMA_VERSION,
        run_id: log.run_id.clone(),
        method: c.method,
        setting: c.setting,
        k: c.k,
        t: c.t_rounds,
        c: c.c,
        seed: c.seed,
        status: status.into(),
        error,
        rounds_completed: log.records.len(),
        cumulative_objective: cumulative_objective(&log.records),
        final_decision_entropy: log
            .records
            .last()
            .and_then(|r| SimplexVector::new(r.decision.clone()).ok())
            .map(|p| p.entropy()),
        metrics,
        regret: regret_summary(log),
    }
}

pub fn write_plot<W: Write>(log: &RunLog, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# schema_version {SCHEMA_VERSION}")?;
    writeln!(out, "# run {}", log.run_id)?;
    writeln!(out, "# block 0: round cumulative_objective")?;
    for (r, v) in log.records.iter().zip(cumulative_objective_curve(&log.records)) {
        writeln!(out, "{} {v}", r.round + 1)?;
    }
    writeln!(out, "\n")?;
    writeln!(out, "# block 1: round decision_entropy")?;
    for r in &log.records {
        let entropy = SimplexVector::new(r.decision.clone()).map(|p| p.entropy()).unwrap_or(f64::NAN);
        writeln!(out, "{} {entropy}", r.round + 1)?;
    }
    Ok(())
}

pub const CSV_HEADER: [&str; 17] = [
    "schema_version",
    "run_id",
    "method",
    "setting",
    "k",
    "t",
    "c",
    "seed",
    "status",
    "avg",
    "worst10",
    "best10",
    "gini_x100",
    "delta_ag",
    "regret",
    "regret_observed",
    "regret_bound",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(summaries: &[Summary], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        let m = s.metrics.as_ref();
        w.write_record([
            SCHEMA_VERSION.to_string(),
            s.run_id.clone(),
            s.method.to_string(),
            match s.setting {
                Setting::CrossSilo => "cross_silo".into(),
                Setting::CrossDevice => "cross_device".into(),
            },
            s.k.to_string(),
            s.t.to_string(),
            s.c.to_string(),
            s.seed.to_string(),
            s.status.clone(),
            cell(m.map(|m| m.average)),
            cell(m.map(|m| m.worst10)),
            cell(m.map(|m| m.best10)),
            cell(m.and_then(|m| m.gini).map(|g| 100.0 * g)),
            cell(m.map(|m| m.parity_gap)),
            cell(s.regret.value),
            cell(s.regret.observed),
            cell(s.regret.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}
