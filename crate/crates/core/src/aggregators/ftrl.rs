use crate::error::{Error, Result};
use crate::simplex::SimplexVector;

/// `softmax(−cumulative / eta)` with the maximum exponent subtracted first.
pub fn ftrl_decision(cumulative: &[f64], eta: f64) -> SimplexVector {
    let min = cumulative.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = cumulative.iter().map(|g| (-(g - min) / eta).exp()).collect();
    SimplexVector::from_weights(&weights).expect("softmax weights are positive")
}

/// Entropic follow-the-regularized-leader on linearized losses with the
/// closed-form update
/// `p⁽ᵗ⁺¹⁾ ∝ exp(−√(log K) · Σ_τ g_τ / (L √(t+1)))`,
/// i.e. step size `η⁽ᵗ⁾ = L √t / √(log K)`.
#[derive(Debug, Clone)]
pub struct FtrlState {
    t: usize,
    cumulative: Vec<f64>,
    l_inf: f64,
    decision: SimplexVector,
}

impl FtrlState {
    pub fn new(k: usize, l_inf: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("need at least one client".into()));
        }
        if !(l_inf > 0.0 && l_inf.is_finite()) {
            return Err(Error::InvalidInput(format!("Lipschitz constant {l_inf} must be positive")));
        }
        Ok(Self {
            t: 0,
            cumulative: vec![0.0; k],
            l_inf,
            decision: SimplexVector::uniform(k),
        })
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn decision(&self) -> &SimplexVector {
        &self.decision
    }

    pub fn cumulative_gradient(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn l_inf(&self) -> f64 {
        self.l_inf
    }

    /// Step size `η⁽ᵗ⁾ = L √t / √(log K)`; a unit denominator stands in for
    /// `log K` when `K = 1`.
    pub fn step_size(&self, t: usize) -> f64 {
        let k = self.cumulative.len();
        let log_k = if k > 1 { (k as f64).ln() } else { 1.0 };
        self.l_inf * (t as f64).sqrt() / log_k.sqrt()
    }

    pub fn step(&mut self, gradient: &[f64]) -> Result<SimplexVector> {
        let k = self.cumulative.len();
        if gradient.len() != k {
            return Err(Error::InvalidInput(format!("gradient has {} entries, expected {k}", gradient.len())));
        }
        let norm = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !(norm <= self.l_inf + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "gradient sup-norm {norm} exceeds the Lipschitz constant {}",
                self.l_inf
            )));
        }
        self.cumulative.iter_mut().zip(gradient).for_each(|(c, g)| *c += g);
        self.t += 1;
        self.decision = if k == 1 {
            SimplexVector::uniform(1)
        } else {
            ftrl_decision(&self.cumulative, self.step_size(self.t + 1))
        };
        Ok(self.decision.clone())
    }
}

/// Value-passing form of [`FtrlState::step`].
pub fn ftrl_eg_step(mut state: FtrlState, gradient: &[f64]) -> Result<(FtrlState, SimplexVector)> {
    let decision = state.step(gradient)?;
    Ok((state, decision))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Entropic mirror descent on `⟨G, p⟩ + η Σ p log p`, run to 1e-10 movement.
    fn mirror_descent_oracle(cumulative: &[f64], eta: f64) -> Vec<f64> {
        let k = cumulative.len();
        let mut p = vec![1.0 / k as f64; k];
        let step = 0.5 / eta;
        for _ in 0..1_000_000 {
            let logits: Vec<f64> = p
                .iter()
                .zip(cumulative)
                .map(|(pi, g)| pi.ln() - step * (g + eta * (pi.ln() + 1.0)))
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = w.iter().sum();
            let next: Vec<f64> = w.iter().map(|x| x / s).collect();
            let moved = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = next;
            if moved < 1e-13 {
                break;
            }
        }
        p
    }

    #[test]
    fn constant_cumulative_is_uniform() {
        let p = ftrl_decision(&[3.2; 6], 0.7);
        for x in p.as_slice() {
            assert!((x - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_coordinate_closed_form() {
        let (a, eta) = (0.8, 1.3);
        let p = ftrl_decision(&[0.0, a], eta);
        assert!((p.as_slice()[0] - 1.0 / (1.0 + (-a / eta).exp())).abs() < 1e-15);
    }

    #[test]
    fn matches_mirror_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = 4;
        let g: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let eta = rng.random_range(0.5..3.0);
        let oracle = mirror_descent_oracle(&g, eta);
        let p = ftrl_decision(&g, eta);
        for (a, b) in p.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn step_uses_time_varying_step_size() {
        let mut s = FtrlState::new(3, 2.0).unwrap();
        let g1 = [-1.0, -0.5, 0.0];
        let g2 = [-0.2, -1.5, -0.1];
        s.step(&g1).unwrap();
        let p = s.step(&g2).unwrap();
        let eta = 2.0 * 3f64.sqrt() / 3f64.ln().sqrt();
        let expected = ftrl_decision(&[-1.2, -2.0, -0.1], eta);
        for (a, b) in p.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s.rounds(), 2);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let k = rng.random_range(2..20);
            let g: Vec<f64> = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
            let shift = rng.random_range(-1e3..1e3);
            let shifted: Vec<f64> = g.iter().map(|x| x + shift).collect();
            let a = ftrl_decision(&g, 1.7);
            let b = ftrl_decision(&shifted, 1.7);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_client_and_large_horizons() {
        let mut s = FtrlState::new(1, 1.0).unwrap();
        assert_eq!(s.step(&[-0.9]).unwrap().as_slice(), &[1.0]);
        let mut s = FtrlState::new(3, 1.0).unwrap();
        for _ in 0..100_000 {
            s.step(&[-1.0, 0.0, -0.5]).unwrap();
        }
        assert!(s.decision().as_slice()[0] > 0.999_999);
        assert!(s.step(&[2.0, 0.0, 0.0]).is_err());
    }
}
