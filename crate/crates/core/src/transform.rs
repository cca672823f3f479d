//! Bounded responses: CDF-driven transformation of unbounded local losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdfKind {
    Weibull,
    Frechet,
    Gumbel,
    Exponential,
    Logistic,
    Normal,
}

impl CdfKind {
    pub const ALL: [CdfKind; 6] = [
        CdfKind::Weibull,
        CdfKind::Frechet,
        CdfKind::Gumbel,
        CdfKind::Exponential,
        CdfKind::Logistic,
        CdfKind::Normal,
    ];

    pub fn default_shape(self) -> f64 {
        match self {
            CdfKind::Weibull => 2.0,
            _ => 1.0,
        }
    }

    fn needs_nonnegative(self) -> bool {
        matches!(self, CdfKind::Weibull | CdfKind::Frechet | CdfKind::Exponential)
    }
}

/// A distribution function with scale `scale` and shape `shape`.
///
/// For the location-scale families (Gumbel, Logistic, Normal) `scale` plays
/// the role of the location and `shape` the spread; Exponential ignores
/// `shape` and uses `scale` as its rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CdfSpecRepr", into = "CdfSpecRepr")]
pub struct CdfSpec {
    pub kind: CdfKind,
    pub scale: f64,
    pub shape: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CdfSpecRepr {
    kind: CdfKind,
    #[serde(default)]
    scale: Option<f64>,
    #[serde(default)]
    shape: Option<f64>,
}

impl From<CdfSpecRepr> for CdfSpec {
    fn from(r: CdfSpecRepr) -> Self {
        CdfSpec {
            kind: r.kind,
            scale: r.scale.unwrap_or(1.0),
            shape: r.shape.unwrap_or_else(|| r.kind.default_shape()),
        }
    }
}

impl From<CdfSpec> for CdfSpecRepr {
    fn from(s: CdfSpec) -> Self {
        CdfSpecRepr {
            kind: s.kind,
            scale: Some(s.scale),
            shape: Some(s.shape),
        }
    }
}

impl CdfSpec {
    pub fn new(kind: CdfKind) -> Self {
        Self {
            kind,
            scale: 1.0,
            shape: kind.default_shape(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config("cdf.scale", "must be positive"));
        }
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(Error::config("cdf.shape", "must be positive"));
        }
        Ok(())
    }
}

impl Default for CdfSpec {
    fn default() -> Self {
        Self::new(CdfKind::Weibull)
    }
}

/// Evaluates the distribution function at `x`.
pub fn cdf_eval(spec: &CdfSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("cdf argument {x} is not finite")));
    }
    if x < 0.0 && spec.kind.needs_nonnegative() {
        return Err(Error::InvalidInput(format!("{:?} cdf requires x >= 0, got {x}", spec.kind)));
    }
    let (a, b) = (spec.scale, spec.shape);
    let value = match spec.kind {
        CdfKind::Weibull => -(-(x / a).powf(b)).exp_m1(),
        CdfKind::Frechet if x == 0.0 => 0.0,
        CdfKind::Frechet => (-(x / a).powf(-b)).exp(),
        CdfKind::Gumbel => (-(-(x - a) / b).exp()).exp(),
        CdfKind::Exponential => -(-a * x).exp_m1(),
        CdfKind::Logistic => 1.0 / (1.0 + (-(x - a) / b).exp()),
        CdfKind::Normal => 0.5 * libm::erfc(-(x - a) / (b * std::f64::consts::SQRT_2)),
    };
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    CrossSilo,
    CrossDevice,
}

/// Closed interval `[c1, c2]` that responses are mapped into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRange {
    c1: f64,
    c2: f64,
}

impl ResponseRange {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c2.is_finite() && 0.0 <= c1 && c1 < c2) {
            return Err(Error::InvalidInput(format!("response range requires 0 <= c1 < c2, got [{c1}, {c2}]")));
        }
        Ok(Self { c1, c2 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn contains(&self, x: f64) -> bool {
        self.c1 <= x && x <= self.c2
    }
}

/// Default response range: `[0, 1/K]` across silos, `[0, C]` across devices.
pub fn default_range(setting: Setting, k: usize, c: f64) -> Result<ResponseRange> {
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::config("c", "c must be in (0,1]"));
    }
    match setting {
        Setting::CrossSilo => ResponseRange::new(0.0, 1.0 / k as f64),
        Setting::CrossDevice => ResponseRange::new(0.0, c),
    }
}

/// Maps observed losses to `c1 + (c2 − c1)·CDF(F_i / F̄)` where `F̄` is the
/// mean over the given (observed) losses.
///
/// When every loss is zero the centered input is taken to be 1 for all
/// clients.
pub fn transform_responses(losses: &[f64], range: &ResponseRange, spec: &CdfSpec) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::InvalidInput("no losses to transform".into()));
    }
    if let Some(x) = losses.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidInput(format!("loss {x} is not a nonnegative finite number")));
    }
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let width = range.c2 - range.c1;
    if mean == 0.0 {
        tracing::warn!("all observed losses are zero; emitting a constant response");
        let level = range.c1 + width * cdf_eval(spec, 1.0)?;
        return Ok(vec![level; losses.len()]);
    }
    losses
        .iter()
        .map(|f| Ok(range.c1 + width * cdf_eval(spec, f / mean)?))
        .collect()
}
