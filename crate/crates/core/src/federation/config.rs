use serde::{Deserialize, Serialize};

use crate::aggregators::{BaselineMethod, BaselineParams, Method};
use crate::error::{Error, Result};
use crate::transform::{default_range, CdfSpec, ResponseRange, Setting};

/// Synthetic heterogeneous federation: Gaussian class clusters, Dirichlet
/// label skew per client and a per-client feature shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub samples_mean: usize,
    pub samples_spread: usize,
    /// Dirichlet concentration of per-client label proportions.
    pub concentration: f64,
    /// Standard deviation of the per-client feature shift.
    pub feature_shift: f64,
    /// Standard deviation of the class-cluster centers.
    pub class_separation: f64,
}

impl Default for SyntheticDataSpec {
    fn default() -> Self {
        Self {
            input_dim: 10,
            num_classes: 5,
            samples_mean: 100,
            samples_spread: 50,
            concentration: 0.5,
            feature_shift: 0.5,
            class_separation: 1.0,
        }
    }
}

impl SyntheticDataSpec {
    pub fn validate(&self, batch: usize) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("data.input_dim", "must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("data.num_classes", "must be at least 2"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::config("data.concentration", "must be positive"));
        }
        if !(self.feature_shift >= 0.0 && self.feature_shift.is_finite()) {
            return Err(Error::config("data.feature_shift", "must be nonnegative"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::config("data.class_separation", "must be nonnegative"));
        }
        if self.samples_spread >= self.samples_mean {
            return Err(Error::config("data.samples_spread", "must be smaller than data.samples_mean"));
        }
        if self.samples_mean - self.samples_spread < batch {
            return Err(Error::config(
                "data.samples_mean",
                format!("smallest client ({} samples) is below the batch size {batch}", self.samples_mean - self.samples_spread),
            ));
        }
        Ok(())
    }
}

/// A complete experiment description. Field names follow the usual
/// federated-learning hyperparameter names (`k`, `t`, `c`, `e`, `b`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub k: usize,
    #[serde(rename = "t")]
    pub t_rounds: usize,
    #[serde(default = "defaults::one")]
    pub c: f64,
    #[serde(default = "defaults::epochs")]
    pub e: usize,
    #[serde(default = "defaults::batch")]
    pub b: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::one")]
    pub lr_decay: f64,
    #[serde(default = "defaults::decay_step")]
    pub lr_decay_step: usize,
    #[serde(default)]
    pub weight_decay: f64,
    pub method: Method,
    #[serde(default = "defaults::setting")]
    pub setting: Setting,
    #[serde(default)]
    pub cdf: CdfSpec,
    #[serde(default)]
    pub seed: u64,
    /// Response range override; defaults depend on the setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default = "defaults::one")]
    pub q: f64,
    #[serde(default = "defaults::q_afl")]
    pub q_afl: f64,
    #[serde(default = "defaults::one")]
    pub lambda: f64,
    #[serde(default = "defaults::propfair_m")]
    pub m: f64,
    #[serde(default)]
    pub data: SyntheticDataSpec,
}

mod defaults {
    use crate::transform::Setting;

    pub fn one() -> f64 {
        1.0
    }
    pub fn epochs() -> usize {
        1
    }
    pub fn batch() -> usize {
        20
    }
    pub fn lr() -> f64 {
        0.1
    }
    pub fn decay_step() -> usize {
        1
    }
    pub fn q_afl() -> f64 {
        50.0
    }
    pub fn propfair_m() -> f64 {
        5.0
    }
    pub fn setting() -> Setting {
        Setting::CrossSilo
    }
}

impl FederationConfig {
    /// A config with every optional field at its default.
    pub fn new(k: usize, t_rounds: usize, method: Method, setting: Setting) -> Self {
        Self {
            name: None,
            k,
            t_rounds,
            c: 1.0,
            e: defaults::epochs(),
            b: defaults::batch(),
            lr: defaults::lr(),
            lr_decay: 1.0,
            lr_decay_step: 1,
            weight_decay: 0.0,
            method,
            setting,
            cdf: CdfSpec::default(),
            seed: 0,
            c1: None,
            c2: None,
            q: 1.0,
            q_afl: defaults::q_afl(),
            lambda: 1.0,
            m: defaults::propfair_m(),
            data: SyntheticDataSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("k", "k must be at least 2"));
        }
        if self.t_rounds < 1 {
            return Err(Error::config("t", "t must be at least 1"));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::config("c", "c must be in (0,1]"));
        }
        if self.setting == Setting::CrossSilo && self.c != 1.0 {
            return Err(Error::config("c", "cross_silo runs use every client each round; c must be 1"));
        }
        if self.e < 1 {
            return Err(Error::config("e", "e must be at least 1"));
        }
        if self.b < 1 {
            return Err(Error::config("b", "b must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "lr must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("lr_decay", "lr_decay must be in (0,1]"));
        }
        if self.lr_decay_step < 1 {
            return Err(Error::config("lr_decay_step", "lr_decay_step must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "weight_decay must be nonnegative"));
        }
        if !self.method.supports(self.setting) {
            return Err(Error::config(
                "method",
                format!("method/setting mismatch: {} cannot run in the {:?} setting", self.method, self.setting),
            ));
        }
        self.cdf.validate()?;
        self.response_range()?;
        if let Some(params) = self.baseline_params(vec![1; self.k])? {
            params.validate()?;
        }
        if self.method == Method::Afl && !(self.q_afl >= 0.0 && self.q_afl.is_finite()) {
            return Err(Error::config("q_afl", "must be a nonnegative number"));
        }
        self.data.validate(self.b)
    }

    /// Response range from `c1`/`c2` when given, else the setting default.
    pub fn response_range(&self) -> Result<ResponseRange> {
        let default = default_range(self.setting, self.k, self.c)?;
        match (self.c1, self.c2) {
            (None, None) => Ok(default),
            (c1, c2) => ResponseRange::new(c1.unwrap_or(default.c1()), c2.unwrap_or(default.c2()))
                .map_err(|e| Error::config("c1/c2", e.to_string())),
        }
    }

    /// Number of clients sampled per round: `max(1, ⌊c·k⌋)`.
    pub fn clients_per_round(&self) -> usize {
        sample_size(self.k, self.c)
    }

    /// Baseline parameters for non-adaptive methods, `None` otherwise.
    pub fn baseline_params(&self, sample_sizes: Vec<usize>) -> Result<Option<BaselineParams>> {
        let (method, q) = match self.method {
            Method::FedAvg => (BaselineMethod::FedAvg, self.q),
            Method::QFedAvg => (BaselineMethod::QFedAvg, self.q),
            Method::Afl => (BaselineMethod::QFedAvg, self.q_afl),
            Method::Term => (BaselineMethod::Term, self.q),
            Method::PropFair => (BaselineMethod::PropFair, self.q),
            Method::AaggffS | Method::AaggffD => return Ok(None),
        };
        Ok(Some(BaselineParams {
            method,
            q,
            lambda: self.lambda,
            m: self.m,
            sample_sizes,
        }))
    }
}

pub(crate) fn sample_size(k: usize, c: f64) -> usize {
    // tolerate representation error such as 0.29 * 100 = 28.999999999999996
    let m = (c * k as f64 + 1e-9).floor() as usize;
    m.clamp(1, k)
}
