//! Server-side round loops for the cross-silo and cross-device settings.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::client::{client_update, ClientTask, LocalResult, LocalTraining};
use super::config::{sample_size, FederationConfig};
use super::data::{generate_federation, ClientDataset};
use super::model::{accuracy, mean_loss, GlobalModel};
use crate::aggregators::{baseline_response, eg_step, BaselineParams, FtrlState, OnsState};
use crate::decision::{decision_gradient, decision_loss, dr_estimate, linearized_gradient, lipschitz_dr, lipschitz_full};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{StreamKind, Streams};
use crate::simplex::{normalize_subset, SimplexVector};
use crate::transform::{transform_responses, ResponseRange, Setting};

/// Everything the server observed and decided in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Participating clients, ascending.
    pub sampled: Vec<usize>,
    /// Pre-update training losses of the participating clients.
    pub losses: Vec<f64>,
    /// Bounded responses of the participating clients.
    pub responses: Vec<f64>,
    /// Full-length response the decision maker learned from: the bounded
    /// responses across silos, their doubly robust completion across devices.
    pub full_response: Vec<f64>,
    /// Decision in force when the round's losses were revealed.
    pub played: Vec<f64>,
    /// Next decision over all clients.
    pub decision: Vec<f64>,
    /// Aggregation weights over the participating clients.
    pub weights: Vec<f64>,
    pub decision_loss: f64,
    pub system_loss: f64,
    pub lr: f64,
    /// Set when the subset of the decision carried no mass and uniform
    /// weights were used instead.
    pub uniform_fallback: bool,
    #[serde(skip)]
    pub duration: Duration,
}

/// Per-client performance of the final model on the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: Vec<f64>,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub model: GlobalModel,
    pub evaluation: Evaluation,
    pub sample_sizes: Vec<usize>,
}

/// A run that stopped early, with the rounds completed before the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("run aborted after {} rounds: {error}", records.len())]
pub struct RunAborted {
    pub error: Error,
    pub records: Vec<RoundRecord>,
}

impl From<Error> for RunAborted {
    fn from(error: Error) -> Self {
        RunAborted { error, records: Vec::new() }
    }
}

/// Uniform sample of `max(1, ⌊c·k⌋)` distinct clients, ascending.
pub fn sample_clients<R: Rng>(k: usize, c: f64, rng: &mut R) -> Vec<usize> {
    let m = sample_size(k, c);
    if m == k {
        return (0..k).collect();
    }
    let mut s = rand::seq::index::sample(rng, k, m).into_vec();
    s.sort_unstable();
    s
}

enum Strategy {
    Baseline(BaselineParams),
    Ons(OnsState),
    Ftrl(FtrlState),
}

impl Strategy {
    fn played(&self) -> SimplexVector {
        match self {
            Strategy::Baseline(p) => p.prior(),
            Strategy::Ons(s) => s.decision().clone(),
            Strategy::Ftrl(s) => s.decision().clone(),
        }
    }
}

struct Federation {
    config: FederationConfig,
    clients: Vec<ClientDataset>,
    streams: Streams,
    range: ResponseRange,
    sample_sizes: Vec<usize>,
}

impl Federation {
    fn new(config: &FederationConfig) -> Result<Self> {
        config.validate()?;
        let clients = generate_federation(&config.data, config.k, config.b, config.seed)?;
        let sample_sizes = clients.iter().map(ClientDataset::num_train).collect();
        Ok(Self {
            config: config.clone(),
            clients,
            streams: Streams::new(config.seed),
            range: config.response_range()?,
            sample_sizes,
        })
    }

    fn lr_at(&self, round: usize) -> f64 {
        let c = &self.config;
        c.lr * c.lr_decay.powi((round / c.lr_decay_step) as i32)
    }

    fn local_updates(&self, model: &GlobalModel, round: usize, sampled: &[usize]) -> Result<Vec<LocalResult>> {
        let opts = LocalTraining {
            epochs: self.config.e,
            batch: self.config.b,
            lr: self.lr_at(round),
            weight_decay: self.config.weight_decay,
        };
        exec::map(sampled, |&client| {
            let mut rng = self.streams.stream(StreamKind::Batching, round as u64, client as u64);
            client_update(model, &self.clients[client], &opts, ClientTask { round, client }, &mut rng)
        })
        .into_iter()
        .collect()
    }

    fn evaluate(&self, model: &GlobalModel) -> Evaluation {
        let scored = exec::map(&self.clients, |c| (accuracy(&model.theta, &c.test), mean_loss(&model.theta, &c.test)));
        let (accuracy, loss) = scored.into_iter().unzip();
        Evaluation { accuracy, loss }
    }

    fn strategy(&self) -> Result<Strategy> {
        if let Some(params) = self.config.baseline_params(self.sample_sizes.clone())? {
            params.validate()?;
            return Ok(Strategy::Baseline(params));
        }
        let k = self.config.k;
        Ok(match self.config.setting {
            Setting::CrossSilo => Strategy::Ons(OnsState::new(k, lipschitz_full(&self.range))?),
            Setting::CrossDevice => {
                let c = self.inclusion_probability();
                Strategy::Ftrl(FtrlState::new(k, lipschitz_dr(&self.range, c))?)
            }
        })
    }

    /// Marginal probability that a given client is sampled in a round.
    fn inclusion_probability(&self) -> f64 {
        self.config.clients_per_round() as f64 / self.config.k as f64
    }

    fn run(&self) -> std::result::Result<RunOutput, RunAborted> {
        let c = &self.config;
        let mut model = GlobalModel::zeros(c.data.input_dim, c.data.num_classes);
        let mut strategy = self.strategy()?;
        let mut records = Vec::with_capacity(c.t_rounds);
        for round in 0..c.t_rounds {
            let started = Instant::now();
            match self.round(round, &mut model, &mut strategy) {
                Ok(mut record) => {
                    record.duration = started.elapsed();
                    tracing::debug!(round, decision_loss = record.decision_loss, "round finished");
                    records.push(record);
                }
                Err(error) => return Err(RunAborted { error, records }),
            }
        }
        Ok(RunOutput {
            evaluation: self.evaluate(&model),
            records,
            model,
            sample_sizes: self.sample_sizes.clone(),
        })
    }

    fn round(&self, round: usize, model: &mut GlobalModel, strategy: &mut Strategy) -> Result<RoundRecord> {
        let k = self.config.k;
        let sampled = match self.config.setting {
            Setting::CrossSilo => (0..k).collect::<Vec<_>>(),
            Setting::CrossDevice => {
                let mut rng = self.streams.stream(StreamKind::Sampling, round as u64, 0);
                sample_clients(k, self.config.c, &mut rng)
            }
        };
        let updates = self.local_updates(model, round, &sampled)?;
        let losses: Vec<f64> = updates.iter().map(|u| u.loss_before).collect();
        let responses = transform_responses(&losses, &self.range, &self.config.cdf)?;
        let played = strategy.played();

        let full_response = match self.config.setting {
            Setting::CrossSilo => responses.clone(),
            Setting::CrossDevice => dr_estimate(&responses, &sampled, self.inclusion_probability(), k)?,
        };
        let loss = decision_loss(&played, &full_response)?;

        let decision = match strategy {
            Strategy::Baseline(params) => {
                let mut full_losses = vec![0.0; k];
                let observed = baseline_response(params, &losses)?;
                for (&i, r) in sampled.iter().zip(observed) {
                    full_losses[i] = r;
                }
                eg_step(&params.prior(), &full_losses, params.step_size())?
            }
            Strategy::Ons(state) => {
                let g = decision_gradient(&played, &full_response)?;
                state.step(&g)?
            }
            Strategy::Ftrl(state) => {
                let mean = responses.iter().sum::<f64>() / responses.len() as f64;
                let g = linearized_gradient(&played, &full_response, &vec![mean; k])?;
                state.step(&g)?
            }
        };

        let (weights, uniform_fallback) = match normalize_subset(&decision, &sampled) {
            Ok(w) => (w.into_vec(), false),
            Err(Error::DegenerateSubset(reason)) => {
                tracing::warn!(round, %reason, "falling back to uniform weights over the sampled clients");
                (vec![1.0 / sampled.len() as f64; sampled.len()], true)
            }
            Err(e) => return Err(e),
        };

        // fixed-order reduction keeps the update independent of scheduling
        for (w, update) in weights.iter().zip(&updates) {
            for (theta, d) in model.theta.iter_mut().zip(&update.delta) {
                *theta -= w * d;
            }
        }
        if !model.is_finite() {
            return Err(Error::Divergence { round, client: usize::MAX });
        }

        Ok(RoundRecord {
            round,
            sampled,
            losses,
            responses,
            full_response,
            played: played.into_vec(),
            decision: decision.into_vec(),
            weights,
            decision_loss: loss,
            system_loss: -loss,
            lr: self.lr_at(round),
            uniform_fallback,
            duration: Duration::ZERO,
        })
    }
}

/// Runs a cross-silo federation: every client participates every round.
pub fn run_silo(config: &FederationConfig) -> std::result::Result<RunOutput, RunAborted> {
    if config.setting != Setting::CrossSilo {
        return Err(Error::config("setting", "run_silo requires setting = cross_silo").into());
    }
    Federation::new(config)?.run()
}

/// Runs a cross-device federation with per-round client sampling.
pub fn run_device(config: &FederationConfig) -> std::result::Result<RunOutput, RunAborted> {
    if config.setting != Setting::CrossDevice {
        return Err(Error::config("setting", "run_device requires setting = cross_device").into());
    }
    Federation::new(config)?.run()
}

/// Dispatches on `config.setting`.
pub fn run(config: &FederationConfig) -> std::result::Result<RunOutput, RunAborted> {
    match config.setting {
        Setting::CrossSilo => run_silo(config),
        Setting::CrossDevice => run_device(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::{ftrl_decision, Method};
    use crate::rng::StreamKind;

    fn small(method: Method, setting: Setting, k: usize, t: usize) -> FederationConfig {
        let mut c = FederationConfig::new(k, t, method, setting);
        c.data.samples_mean = 60;
        c.data.samples_spread = 20;
        c
    }

    #[test]
    fn sampling_is_sorted_distinct_and_sized() {
        let streams = Streams::new(9);
        for round in 0..200 {
            let mut rng = streams.stream(StreamKind::Sampling, round, 0);
            let s = sample_clients(37, 0.3, &mut rng);
            assert_eq!(s.len(), 11);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 37));
        }
        let mut rng = streams.stream(StreamKind::Sampling, 0, 0);
        assert_eq!(sample_clients(5, 0.01, &mut rng).len(), 1);
        assert_eq!(sample_clients(5, 1.0, &mut rng), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let streams = Streams::new(4);
        let mut counts = [0usize; 10];
        let rounds = 20_000;
        for round in 0..rounds {
            let mut rng = streams.stream(StreamKind::Sampling, round, 0);
            for i in sample_clients(10, 0.3, &mut rng) {
                counts[i] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / rounds as f64;
            assert!((freq - 0.3).abs() < 0.015, "{freq}");
        }
    }

    #[test]
    fn fedavg_reduces_training_loss() {
        let out = run(&small(Method::FedAvg, Setting::CrossSilo, 5, 30)).unwrap();
        let first: f64 = out.records[0].losses.iter().sum();
        let last: f64 = out.records.last().unwrap().losses.iter().sum();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn fedavg_weights_follow_sample_sizes() {
        let out = run(&small(Method::FedAvg, Setting::CrossSilo, 6, 3)).unwrap();
        let n: usize = out.sample_sizes.iter().sum();
        for r in &out.records {
            for (w, &ni) in r.weights.iter().zip(&out.sample_sizes) {
                assert!((w - ni as f64 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_clients_keep_uniform_decision() {
        let mut cfg = small(Method::AaggffS, Setting::CrossSilo, 2, 10);
        // a single class and no feature shift makes both silos statistically alike,
        // but the sample sizes still differ; force equal sizes with zero spread
        cfg.data.samples_spread = 0;
        cfg.data.num_classes = 2;
        cfg.data.concentration = 1e9;
        cfg.data.feature_shift = 0.0;
        let out = run(&cfg).unwrap();
        for r in &out.records {
            if (r.responses[0] - r.responses[1]).abs() < 1e-12 {
                assert!((r.decision[0] - 0.5).abs() < 1e-9);
            }
        }
        // symmetric responses keep the decision symmetric in general
        let sym = out.records.iter().all(|r| {
            let d = r.responses[0] - r.responses[1];
            d.abs() > 1e-12 || (r.decision[0] - r.decision[1]).abs() < 1e-9
        });
        assert!(sym);
    }

    #[test]
    fn full_participation_device_run_matches_closed_form_ftrl() {
        let mut cfg = small(Method::AaggffD, Setting::CrossDevice, 6, 8);
        cfg.c = 1.0;
        let out = run(&cfg).unwrap();
        let range = cfg.response_range().unwrap();
        let l = lipschitz_dr(&range, 1.0);
        let mut cumulative = vec![0.0; 6];
        for (t, r) in out.records.iter().enumerate() {
            assert_eq!(r.sampled, (0..6).collect::<Vec<_>>());
            assert_eq!(r.full_response, r.responses);
            let p = SimplexVector::new(r.played.clone()).unwrap();
            let mean = r.responses.iter().sum::<f64>() / 6.0;
            let g = linearized_gradient(&p, &r.responses, &[mean; 6]).unwrap();
            for (c, gi) in cumulative.iter_mut().zip(g) {
                *c += gi;
            }
            let eta = l * ((t + 2) as f64).sqrt() / 6f64.ln().sqrt();
            let expected = ftrl_decision(&cumulative, eta);
            for (a, b) in expected.as_slice().iter().zip(&r.decision) {
                assert!((a - b).abs() < 1e-12, "round {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn device_weights_live_on_the_sampled_subset() {
        let mut cfg = small(Method::AaggffD, Setting::CrossDevice, 20, 6);
        cfg.c = 0.25;
        let out = run(&cfg).unwrap();
        for r in &out.records {
            assert_eq!(r.sampled.len(), 5);
            assert_eq!(r.weights.len(), 5);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mass: f64 = r.sampled.iter().map(|&i| r.decision[i]).sum();
            for (w, &i) in r.weights.iter().zip(&r.sampled) {
                assert!((w - r.decision[i] / mass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        for (method, setting) in [(Method::AaggffS, Setting::CrossSilo), (Method::AaggffD, Setting::CrossDevice)] {
            let mut cfg = small(method, setting, 8, 5);
            if setting == Setting::CrossDevice {
                cfg.c = 0.5;
            }
            let a = run(&cfg).unwrap();
            let b = run(&cfg).unwrap();
            let untimed = |records: &[RoundRecord]| {
                records.iter().cloned().map(|r| RoundRecord { duration: Duration::ZERO, ..r }).collect::<Vec<_>>()
            };
            assert_eq!(untimed(&a.records), untimed(&b.records));
            assert_eq!(a.model, b.model);
            assert_eq!(a.evaluation, b.evaluation);
        }
    }

    #[test]
    fn first_round_losses_agree_across_methods() {
        let losses: Vec<Vec<f64>> = [Method::FedAvg, Method::QFedAvg, Method::Term, Method::PropFair, Method::AaggffS]
            .into_iter()
            .map(|m| run(&small(m, Setting::CrossSilo, 4, 1)).unwrap().records[0].losses.clone())
            .collect();
        assert!(losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn wrong_entry_point_is_rejected() {
        let cfg = small(Method::FedAvg, Setting::CrossSilo, 3, 1);
        let err = run_device(&cfg).unwrap_err();
        assert!(err.records.is_empty());
        assert!(matches!(err.error, Error::InvalidConfig { .. }));
    }

    #[test]
    fn divergence_aborts_with_completed_rounds() {
        let mut cfg = small(Method::FedAvg, Setting::CrossSilo, 3, 50);
        cfg.lr = 1e10;
        cfg.weight_decay = 1.0;
        let err = run(&cfg).unwrap_err();
        assert!(matches!(err.error, Error::Divergence { .. }), "{:?}", err.error);
        assert!(err.records.len() < 50);
    }

    #[test]
    fn learning_rate_schedule() {
        let mut cfg = small(Method::FedAvg, Setting::CrossSilo, 2, 7);
        cfg.lr = 0.2;
        cfg.lr_decay = 0.5;
        cfg.lr_decay_step = 3;
        let out = run(&cfg).unwrap();
        let lrs: Vec<f64> = out.records.iter().map(|r| r.lr).collect();
        assert_eq!(lrs, vec![0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.05]);
    }
}
