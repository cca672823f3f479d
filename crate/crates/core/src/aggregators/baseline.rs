use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// Floor applied to losses before taking logarithms.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Floor applied to `M − F` when a PropFair loss reaches its ceiling `M`.
pub const PROPFAIR_GAP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    FedAvg,
    QFedAvg,
    Term,
    PropFair,
}

/// Parameters of the stateless baselines. AFL is `QFedAvg` with a large `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub method: BaselineMethod,
    pub q: f64,
    pub lambda: f64,
    pub m: f64,
    pub sample_sizes: Vec<usize>,
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::config("q", "must be a nonnegative number"));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.method == BaselineMethod::Term && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::config("sample_sizes", "every client needs at least one sample"));
        }
        Ok(())
    }

    /// Step size of the entropic update: `1/λ` for TERM, 1 otherwise.
    pub fn step_size(&self) -> f64 {
        match self.method {
            BaselineMethod::Term => 1.0 / self.lambda,
            _ => 1.0,
        }
    }

    /// The last decision the baselines always restart from: `n_i / n`.
    pub fn prior(&self) -> SimplexVector {
        let w: Vec<f64> = self.sample_sizes.iter().map(|&n| n as f64).collect();
        SimplexVector::from_weights(&w).expect("sample sizes validated positive")
    }

    /// New decision after observing `losses` (full length K).
    pub fn decide(&self, losses: &[f64]) -> Result<SimplexVector> {
        let response = baseline_response(self, losses)?;
        eg_step(&self.prior(), &response, self.step_size())
    }
}

/// Response each baseline feeds to its entropic update.
pub fn baseline_response(params: &BaselineParams, losses: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = losses.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("loss {x} is not finite")));
    }
    let response = match params.method {
        BaselineMethod::FedAvg => vec![0.0; losses.len()],
        BaselineMethod::Term => losses.to_vec(),
        BaselineMethod::QFedAvg => losses
            .iter()
            .map(|&f| {
                if f < LOSS_FLOOR {
                    tracing::debug!(loss = f, "clamping loss at the log floor");
                }
                params.q * f.max(LOSS_FLOOR).ln()
            })
            .collect(),
        BaselineMethod::PropFair => losses
            .iter()
            .map(|&f| {
                let gap = params.m - f;
                if gap < PROPFAIR_GAP_FLOOR {
                    tracing::warn!(loss = f, m = params.m, "loss reached the PropFair ceiling; clamping");
                }
                -gap.max(PROPFAIR_GAP_FLOOR).ln()
            })
            .collect(),
    };
    Ok(response)
}

/// Exponentiated gradient step `p_i ∝ prev_i · exp(r_i / η)`, evaluated in
/// log space.
pub fn eg_step(prev: &SimplexVector, response: &[f64], eta: f64) -> Result<SimplexVector> {
    if prev.len() != response.len() {
        return Err(Error::InvalidInput("decision and response differ in length".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("step size {eta} must be positive")));
    }
    let logits: Vec<f64> = prev
        .as_slice()
        .iter()
        .zip(response)
        .map(|(&p, &r)| {
            if p == 0.0 {
                if r != 0.0 {
                    tracing::warn!("zero-support coordinate receives a nonzero response; it stays at zero");
                }
                f64::NEG_INFINITY
            } else {
                p.ln() + r / eta
            }
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    SimplexVector::from_weights(&weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(method: BaselineMethod, sizes: &[usize]) -> BaselineParams {
        BaselineParams {
            method,
            q: 1.0,
            lambda: 1.0,
            m: 5.0,
            sample_sizes: sizes.to_vec(),
        }
    }

    #[test]
    fn response_examples() {
        let fedavg = params(BaselineMethod::FedAvg, &[1, 1]);
        assert_eq!(baseline_response(&fedavg, &[0.3, 7.0]).unwrap(), vec![0.0, 0.0]);
        let term = params(BaselineMethod::Term, &[1, 1]);
        assert_eq!(baseline_response(&term, &[0.0, 2f64.ln()]).unwrap(), vec![0.0, 2f64.ln()]);
        let q = params(BaselineMethod::QFedAvg, &[1, 1]);
        let r = baseline_response(&q, &[1.0, 2.0]).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn clamps() {
        let q = params(BaselineMethod::QFedAvg, &[1]);
        assert_eq!(baseline_response(&q, &[0.0]).unwrap(), vec![LOSS_FLOOR.ln()]);
        let pf = params(BaselineMethod::PropFair, &[1]);
        assert_eq!(baseline_response(&pf, &[9.0]).unwrap(), vec![-PROPFAIR_GAP_FLOOR.ln()]);
    }

    #[test]
    fn eg_examples() {
        let u = SimplexVector::uniform(3);
        assert_eq!(eg_step(&u, &[0.0; 3], 1.0).unwrap(), u);

        let term = params(BaselineMethod::Term, &[1, 1]);
        let p = eg_step(&term.prior(), &[0.0, 2f64.ln()], term.step_size()).unwrap();
        assert!((p.as_slice()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.as_slice()[1] - 2.0 / 3.0).abs() < 1e-15);

        let fedavg = params(BaselineMethod::FedAvg, &[1, 3]);
        for losses in [[0.9, 0.1], [0.1, 0.9], [5.0, 0.0]] {
            let p = fedavg.decide(&losses).unwrap();
            assert!((p.as_slice()[0] - 0.25).abs() < 1e-15);
            assert!((p.as_slice()[1] - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn eg_keeps_zero_support() {
        let p = SimplexVector::new(vec![0.0, 0.5, 0.5]).unwrap();
        let next = eg_step(&p, &[3.0, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(next.as_slice()[0], 0.0);
    }

    #[test]
    fn eg_survives_huge_responses() {
        let p = SimplexVector::uniform(3);
        let next = eg_step(&p, &[5000.0, 4990.0, -5000.0], 1.0).unwrap();
        assert!(next.as_slice()[0] > 0.99);
    }

    #[test]
    fn validation() {
        let mut p = params(BaselineMethod::PropFair, &[1, 2]);
        p.m = 0.5;
        assert!(p.validate().is_err());
        let mut p = params(BaselineMethod::QFedAvg, &[1, 0]);
        assert!(p.validate().is_err());
        p.sample_sizes = vec![1, 1];
        p.q = -1.0;
        assert!(p.validate().is_err());
    }
}
