//! Mixing-coefficient update strategies.
//!
//! Baselines (FedAvg, AFL, q-FedAvg, TERM, PropFair) are one exponentiated
//! gradient step away from the sample-size prior. The stateful strategies are
//! the Online Newton Step ([`OnsState`], cross-silo) and entropic
//! follow-the-regularized-leader with a closed-form update ([`FtrlState`],
//! cross-device).

mod baseline;
mod ftrl;
mod hindsight;
mod ons;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::transform::Setting;

pub use baseline::{baseline_response, eg_step, BaselineMethod, BaselineParams, LOSS_FLOOR, PROPFAIR_GAP_FLOOR};
pub use ftrl::{ftrl_decision, ftrl_eg_step, FtrlState};
pub use hindsight::{cumulative_loss, hindsight_best};
pub use ons::{ons_step, OnsState};

/// Strategy identifier as written in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    FedAvg,
    Afl,
    QFedAvg,
    Term,
    PropFair,
    AaggffS,
    AaggffD,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::FedAvg,
        Method::Afl,
        Method::QFedAvg,
        Method::Term,
        Method::PropFair,
        Method::AaggffS,
        Method::AaggffD,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FedAvg => "fedavg",
            Method::Afl => "afl",
            Method::QFedAvg => "qfedavg",
            Method::Term => "term",
            Method::PropFair => "propfair",
            Method::AaggffS => "aaggff-s",
            Method::AaggffD => "aaggff-d",
        }
    }

    /// Whether the strategy may run under `setting`.
    pub fn supports(self, setting: Setting) -> bool {
        match self {
            Method::AaggffS => setting == Setting::CrossSilo,
            Method::AaggffD => setting == Setting::CrossDevice,
            _ => true,
        }
    }

    pub fn is_stateful(self) -> bool {
        matches!(self, Method::AaggffS | Method::AaggffD)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::config("method", format!("unknown method `{s}` (expected one of {})", known.join(", ")))
            })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.as_str().to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_strings_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("aaggff".parse::<Method>().is_err());
    }

    #[test]
    fn setting_compatibility() {
        assert!(!Method::AaggffD.supports(Setting::CrossSilo));
        assert!(!Method::AaggffS.supports(Setting::CrossDevice));
        assert!(Method::Term.supports(Setting::CrossDevice));
    }
}
