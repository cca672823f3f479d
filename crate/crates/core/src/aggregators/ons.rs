use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::simplex::{project_mahalanobis, PsdMatrix, SimplexVector};

/// Online Newton Step over the simplex in its follow-the-regularized-leader form:
///
/// `p⁽ᵗ⁺¹⁾ = argmin_p Σ_τ ⟨g_τ, p⟩ + α/2 ‖p‖² + β/2 Σ_τ ⟨g_τ, p − p_τ⟩²`
///
/// with `α = 4 K L∞` and `β = 1 / (4 L∞)`. The objective is the quadratic
/// `½ pᵀ A p + ⟨b, p⟩` with `A = αI + β Σ g gᵀ` and
/// `b = Σ (g_τ − β ⟨g_τ, p_τ⟩ g_τ)`, so each step is the `A`-metric projection
/// of the Newton point `−A⁻¹ b`.
#[derive(Debug, Clone)]
pub struct OnsState {
    t: usize,
    decision: SimplexVector,
    b_matrix: PsdMatrix,
    linear: Vec<f64>,
    alpha: f64,
    beta: f64,
    l_inf: f64,
}

impl OnsState {
    pub fn new(k: usize, l_inf: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("need at least one client".into()));
        }
        if !(l_inf > 0.0 && l_inf.is_finite()) {
            return Err(Error::InvalidInput(format!("Lipschitz constant {l_inf} must be positive")));
        }
        let alpha = 4.0 * k as f64 * l_inf;
        let beta = 1.0 / (4.0 * l_inf);
        Ok(Self {
            t: 0,
            decision: SimplexVector::uniform(k),
            b_matrix: PsdMatrix::scaled_identity(k, alpha)?,
            linear: vec![0.0; k],
            alpha,
            beta,
            l_inf,
        })
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    /// Decision to play in the next round.
    pub fn decision(&self) -> &SimplexVector {
        &self.decision
    }

    pub fn b_matrix(&self) -> &PsdMatrix {
        &self.b_matrix
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn l_inf(&self) -> f64 {
        self.l_inf
    }

    /// Absorbs the gradient observed at the current decision and returns the
    /// next one. The state is left untouched on error.
    pub fn step(&mut self, gradient: &[f64]) -> Result<SimplexVector> {
        let k = self.decision.len();
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

        let mut b_matrix = self.b_matrix.clone();
        b_matrix.add_outer(self.beta, gradient);
        let played: f64 = gradient.iter().zip(self.decision.as_slice()).map(|(g, p)| g * p).sum();
        let linear: Vec<f64> = self
            .linear
            .iter()
            .zip(gradient)
            .map(|(b, g)| b + g - self.beta * played * g)
            .collect();

        let chol = b_matrix
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidMatrix("Newton matrix lost positive definiteness".into()))?;
        let newton = -chol.solve(&DVector::from_column_slice(&linear));
        let next = project_mahalanobis(newton.as_slice(), &b_matrix)?;

        self.t += 1;
        self.b_matrix = b_matrix;
        self.linear = linear;
        self.decision = next.clone();
        Ok(next)
    }
}

/// Value-passing form of [`OnsState::step`].
pub fn ons_step(mut state: OnsState, gradient: &[f64]) -> Result<(OnsState, SimplexVector)> {
    let decision = state.step(gradient)?;
    Ok((state, decision))
}
