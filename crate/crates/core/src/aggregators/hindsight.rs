use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::simplex::{project_mahalanobis, PsdMatrix, SimplexVector};

const MAX_ITERATIONS: usize = 100_000;
const GAP_TOL: f64 = 1e-10;

/// `Σ_t −log(1 + ⟨p, r_t⟩)`.
pub fn cumulative_loss(p: &[f64], responses: &[Vec<f64>]) -> f64 {
    responses
        .iter()
        .map(|r| -(1.0 + r.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()).ln())
        .sum()
}

struct Cumulative<'a> {
    responses: &'a [Vec<f64>],
    k: usize,
}

impl Cumulative<'_> {
    fn value(&self, p: &[f64]) -> f64 {
        cumulative_loss(p, self.responses)
    }

    fn gradient_and_hessian(&self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let mut g = vec![0.0; self.k];
        let mut h = DMatrix::zeros(self.k, self.k);
        for r in self.responses {
            let s = 1.0 + r.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            let rv = DVector::from_column_slice(r);
            g.iter_mut().zip(r).for_each(|(gi, ri)| *gi -= ri / s);
            h.ger(1.0 / (s * s), &rv, &rv, 1.0);
        }
        (g, h)
    }
}

/// Frank–Wolfe duality gap `⟨g, p⟩ − min_i g_i`, an upper bound on the
/// suboptimality of `p`.
fn duality_gap(g: &[f64], p: &[f64]) -> f64 {
    let inner: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
    inner - g.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Best fixed decision in hindsight: `argmin_{p ∈ Δ} Σ_t −log(1 + ⟨p, r_t⟩)`.
///
/// Projected Newton iterations (each a metric projection onto the simplex)
/// with Armijo backtracking; stops once the Frank–Wolfe gap certifies the
/// objective to within `1e-10`.
pub fn hindsight_best(responses: &[Vec<f64>]) -> Result<SimplexVector> {
    let k = responses
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("no responses".into()))?;
    if k == 0 {
        return Err(Error::InvalidInput("responses are empty vectors".into()));
    }
    for (t, r) in responses.iter().enumerate() {
        if r.len() != k {
            return Err(Error::InvalidInput(format!("response {t} has {} entries, expected {k}", r.len())));
        }
        if r.iter().any(|x| !x.is_finite() || *x <= -1.0) {
            return Err(Error::InvalidInput(format!("response {t} has entries outside (-1, inf)")));
        }
    }
    let objective = Cumulative { responses, k };
    let mut p = vec![1.0 / k as f64; k];
    let mut f = objective.value(&p);
    let mut gap = f64::INFINITY;

    for _ in 0..MAX_ITERATIONS {
        let (g, h) = objective.gradient_and_hessian(&p);
        gap = duality_gap(&g, &p);
        if gap <= GAP_TOL {
            return Ok(SimplexVector::from_vec_unchecked(p));
        }

        let shift = 1e-8 * (h.trace() / k as f64) + 1e-12;
        let metric = h + DMatrix::from_diagonal_element(k, k, shift);
        // directions sum to zero, so g may be shifted by ⟨g, p⟩; the shifted
        // gradient vanishes on the support at the optimum, which keeps the
        // Newton point near the simplex and the slope free of cancellation
        let level: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        let g: Vec<f64> = g.iter().map(|gi| gi - level).collect();
        let mut direction = newton_direction(&p, &g, metric);
        let mut slope: f64 = g.iter().zip(&direction).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            // fall back to the Frank–Wolfe vertex
            let j = argmin(&g);
            direction = p.iter().enumerate().map(|(i, pi)| f64::from(i == j) - pi).collect();
            slope = -gap;
        }

        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = p.iter().zip(&direction).map(|(a, d)| (a + step * d).max(0.0)).collect();
            let total: f64 = trial.iter().sum();
            let trial: Vec<f64> = trial.iter().map(|x| x / total).collect();
            let ft = objective.value(&trial);
            if ft <= f + 1e-4 * step * slope {
                break Some((trial, ft));
            }
            // below the resolution of f, progress is judged by the gap instead
            if ft <= f + 4.0 * f64::EPSILON * f.abs().max(1.0) {
                let (gt, _) = objective.gradient_and_hessian(&trial);
                if duality_gap(&gt, &trial) < gap {
                    break Some((trial, ft));
                }
            }
            step *= 0.5;
            if step < 1e-14 {
                break None;
            }
        };
        match accepted {
            Some((next, fnext)) => {
                p = next;
                f = fnext;
            }
            None => break,
        }
    }

    // stalled at floating-point resolution: accept when the certificate is tight
    let tolerance = 1e-12 * responses.len() as f64 + GAP_TOL;
    if gap <= tolerance.max(1e-9) {
        return Ok(SimplexVector::from_vec_unchecked(p));
    }
    Err(Error::Convergence {
        solver: "best-in-hindsight",
        iterations: MAX_ITERATIONS,
        residual: gap,
        best: p,
    })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

fn newton_direction(p: &[f64], g: &[f64], metric: DMatrix<f64>) -> Vec<f64> {
    let Some(chol) = metric.clone().cholesky() else {
        return vec![0.0; p.len()];
    };
    let newton = DVector::from_column_slice(p) - chol.solve(&DVector::from_column_slice(g));
    let Ok(metric) = PsdMatrix::new(metric) else {
        return vec![0.0; p.len()];
    };
    let target = match project_mahalanobis(newton.as_slice(), &metric) {
        Ok(x) => x.into_vec(),
        Err(Error::Convergence { best, .. }) => best,
        Err(_) => return vec![0.0; p.len()],
    };
    target.iter().zip(p).map(|(a, b)| a - b).collect()
}
