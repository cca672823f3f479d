//! Regret and fairness summaries of finished runs.

use crate::aggregators::{cumulative_loss, hindsight_best};
use crate::decision::decision_loss;
use crate::error::{Error, Result};
use crate::federation::RoundRecord;
use crate::simplex::SimplexVector;

/// Regret of a played sequence together with the comparator it was
/// measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub learner_loss: f64,
    pub comparator_loss: f64,
    pub comparator: SimplexVector,
}

impl RegretReport {
    pub fn regret(&self) -> f64 {
        self.learner_loss - self.comparator_loss
    }
}

/// `Σ_t ℓ_t(p_t) − min_p Σ_t ℓ_t(p)` with the minimizer from [`hindsight_best`].
pub fn regret_report(decisions: &[SimplexVector], responses: &[Vec<f64>]) -> Result<RegretReport> {
    if decisions.len() != responses.len() {
        return Err(Error::InvalidInput(format!(
            "{} decisions for {} responses",
            decisions.len(),
            responses.len()
        )));
    }
    if decisions.is_empty() {
        return Err(Error::InvalidInput("regret needs at least one round".into()));
    }
    let learner_loss = decisions
        .iter()
        .zip(responses)
        .map(|(p, r)| decision_loss(p, r))
        .sum::<Result<f64>>()?;
    let comparator = hindsight_best(responses)?;
    Ok(RegretReport {
        learner_loss,
        comparator_loss: cumulative_loss(comparator.as_slice(), responses),
        comparator,
    })
}

pub fn regret(decisions: &[SimplexVector], responses: &[Vec<f64>]) -> Result<f64> {
    regret_report(decisions, responses).map(|r| r.regret())
}

/// `2 L∞ K (1 + log(1 + T / 16K))`.
pub fn ons_regret_bound(k: usize, t: usize, l_inf: f64) -> f64 {
    let k = k as f64;
    2.0 * l_inf * k * (1.0 + (1.0 + t as f64 / (16.0 * k)).ln())
}

/// `2 L∞ √(T log K)`.
pub fn ftrl_regret_bound(k: usize, t: usize, l_inf: f64) -> f64 {
    2.0 * l_inf * (t as f64 * (k as f64).ln()).sqrt()
}

/// Per-client performance, indexed by client id.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceDistribution(Vec<f64>);

impl PerformanceDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty performance distribution".into()));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("performance value {x} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Gini coefficient `Σ_i Σ_j |x_i − x_j| / (2 n² μ)`, evaluated in
/// `O(n log n)` from the sorted values.
pub fn gini(perf: &PerformanceDistribution) -> Result<f64> {
    if let Some(x) = perf.0.iter().find(|&&x| x < 0.0) {
        return Err(Error::InvalidInput(format!("gini needs nonnegative values, got {x}")));
    }
    let n = perf.len() as f64;
    let total: f64 = perf.0.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedGini);
    }
    // with ascending x, the gap x_m − x_{m−1} separates m values from n − m,
    // so Σ_i Σ_j |x_i − x_j| = 2 Σ_m m (n − m) (x_m − x_{m−1}); equal values
    // contribute exact zeros
    let weighted: f64 = perf
        .sorted()
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let m = (i + 1) as f64;
            m * (n - m) * (w[1] - w[0])
        })
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// Means of the lowest and the highest `⌈fraction · n⌉` values.
pub fn worst_best(perf: &PerformanceDistribution, fraction: f64) -> Result<(f64, f64)> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidInput(format!("tail fraction {fraction} must lie in (0, 0.5]")));
    }
    let n = perf.len();
    let m = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let s = perf.sorted();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / m as f64;
    Ok((mean(&s[..m]), mean(&s[n - m..])))
}

/// `max − min` over clients.
pub fn accuracy_parity_gap(perf: &PerformanceDistribution) -> f64 {
    let (lo, hi) = perf
        .0
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// `Σ_t Σ_{i∈S_t} p_i F_i` using each round's aggregation weights.
pub fn cumulative_objective(records: &[RoundRecord]) -> f64 {
    cumulative_objective_curve(records).last().copied().unwrap_or(0.0)
}

/// Running values of [`cumulative_objective`] after each round.
pub fn cumulative_objective_curve(records: &[RoundRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.weights.iter().zip(&r.losses).map(|(w, f)| w * f).sum::<f64>();
            Some(*acc)
        })
        .collect()
}

/// `log(1 + ⟨p, F̃⟩)`.
pub fn system_loss(p: &SimplexVector, transformed_losses: &[f64]) -> Result<f64> {
    decision_loss(p, transformed_losses).map(|l| -l)
}
