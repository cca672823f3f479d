//! Decision losses on the simplex, their gradients, and the doubly robust
//! machinery used when only a subset of clients reports a response.
//!
//! The decision loss of a mixing vector `p` against a response `r` is the
//! negative logarithmic growth `−log(1 + ⟨p, r⟩)`.

use crate::error::{Error, Result};
use crate::simplex::SimplexVector;
use crate::transform::ResponseRange;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn growth(p: &SimplexVector, r: &[f64]) -> Result<f64> {
    if p.len() != r.len() {
        return Err(Error::InvalidInput(format!(
            "decision has {} entries but response has {}",
            p.len(),
            r.len()
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("response has non-finite entries".into()));
    }
    let g = 1.0 + dot(p.as_slice(), r);
    if g <= 0.0 {
        return Err(Error::InvalidInput(format!("1 + <p, r> = {g} is not positive")));
    }
    Ok(g)
}

pub fn decision_loss(p: &SimplexVector, r: &[f64]) -> Result<f64> {
    Ok(-growth(p, r)?.ln())
}

/// `∇_p ℓ = −r / (1 + ⟨p, r⟩)`.
pub fn decision_gradient(p: &SimplexVector, r: &[f64]) -> Result<Vec<f64>> {
    let g = growth(p, r)?;
    let grad: Vec<f64> = r.iter().map(|x| -x / g).collect();
    Ok(grad)
}

/// Doubly robust completion of a partially observed response.
///
/// `observed[j]` is the response of client `sampled[j]`; unobserved entries
/// are imputed with the observed mean and observed entries are reweighted by
/// the inclusion probability `c`.
pub fn dr_estimate(observed: &[f64], sampled: &[usize], c: f64, k: usize) -> Result<Vec<f64>> {
    if sampled.is_empty() {
        return Err(Error::DegenerateRound("no client responded".into()));
    }
    if observed.len() != sampled.len() {
        return Err(Error::InvalidInput("observed responses and sampled indices differ in length".into()));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidInput(format!("sampling probability {c} outside (0, 1]")));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let mut estimate = vec![mean; k];
    for (&i, &r) in sampled.iter().zip(observed) {
        if i >= k {
            return Err(Error::InvalidInput(format!("client index {i} out of range for {k} clients")));
        }
        estimate[i] = (1.0 - 1.0 / c) * mean + r / c;
    }
    Ok(estimate)
}

/// First-order expansion of the decision gradient in the response around `r0`:
/// `−r / (1 + ⟨p, r0⟩) + r0 · ⟨p, r − r0⟩ / (1 + ⟨p, r0⟩)²`.
pub fn linearized_gradient(p: &SimplexVector, r: &[f64], r0: &[f64]) -> Result<Vec<f64>> {
    if r.len() != p.len() {
        return Err(Error::InvalidInput("response and decision differ in length".into()));
    }
    let g0 = growth(p, r0)?;
    let deviation: f64 = p.as_slice().iter().zip(r.iter().zip(r0)).map(|(pi, (a, b))| pi * (a - b)).sum();
    let correction = deviation / (g0 * g0);
    Ok(r.iter().zip(r0).map(|(ri, r0i)| -ri / g0 + r0i * correction).collect())
}

/// Sup-norm Lipschitz constant of the decision loss for responses in `range`.
pub fn lipschitz_full(range: &ResponseRange) -> f64 {
    range.c2() / (1.0 + range.c1())
}

/// Sup-norm bound on the linearized gradient built from a doubly robust
/// estimate with inclusion probability `c`.
pub fn lipschitz_dr(range: &ResponseRange, c: f64) -> f64 {
    lipschitz_full(range) + 2.0 * (range.c2() - range.c1()) / (c * (1.0 + range.c1()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> SimplexVector {
        let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().ln() + 1e-3).collect();
        SimplexVector::from_weights(&w).unwrap()
    }

    /// Central differences of the loss along coordinate directions. The loss
    /// extends smoothly off the simplex, so unconstrained perturbations are fine.
    fn fd_gradient(p: &[f64], r: &[f64], h: f64) -> Vec<f64> {
        let f = |x: &[f64]| -(1.0 + dot(x, r)).ln();
        (0..p.len())
            .map(|i| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn loss_examples() {
        let c = 0.3;
        let u = SimplexVector::uniform(4);
        assert!((decision_loss(&u, &[c; 4]).unwrap() + (1.0f64 + c).ln()).abs() < 1e-15);
        assert_eq!(decision_loss(&u, &[0.0; 4]).unwrap(), 0.0);
        let e1 = SimplexVector::vertex(2, 0);
        assert!((decision_loss(&e1, &[0.2, 0.9]).unwrap() + 1.2f64.ln()).abs() < 1e-15);
        assert!(decision_loss(&u, &[0.0; 3]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let u = SimplexVector::uniform(3);
        assert_eq!(decision_gradient(&u, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let c = 0.4;
        for g in decision_gradient(&u, &[c; 3]).unwrap() {
            assert!((g + c / (1.0 + c)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..100 {
            let k = if trial == 0 { 4 } else { rng.random_range(2..10) };
            let p = random_simplex(&mut rng, k);
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
            let g = decision_gradient(&p, &r).unwrap();
            let fd = fd_gradient(p.as_slice(), &r, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_respects_lipschitz_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let k = rng.random_range(1..12);
            let c1 = rng.random_range(0.0..1.0);
            let range = ResponseRange::new(c1, c1 + rng.random_range(0.01..2.0)).unwrap();
            let p = random_simplex(&mut rng, k);
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(range.c1()..=range.c2())).collect();
            let g = decision_gradient(&p, &r).unwrap();
            let norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(norm <= lipschitz_full(&range) + 1e-12);
        }
    }

    #[test]
    fn strictly_convex_along_informative_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k = rng.random_range(2..8);
            let p = random_simplex(&mut rng, k);
            let q = random_simplex(&mut rng, k);
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let gap = dot(p.as_slice(), &r) - dot(q.as_slice(), &r);
            if gap.abs() < 1e-3 {
                continue;
            }
            let gamma = rng.random_range(0.05..0.95);
            let mix: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| gamma * a + (1.0 - gamma) * b).collect();
            let mix = SimplexVector::from_weights(&mix).unwrap();
            let lhs = decision_loss(&mix, &r).unwrap();
            let rhs = gamma * decision_loss(&p, &r).unwrap() + (1.0 - gamma) * decision_loss(&q, &r).unwrap();
            assert!(lhs < rhs);
        }
    }

    #[test]
    fn dr_examples() {
        let r = [0.1, 0.4, 0.3];
        assert_eq!(dr_estimate(&r, &[0, 1, 2], 1.0, 3).unwrap(), r.to_vec());
        for x in dr_estimate(&[0.7], &[3], 0.2, 5).unwrap() {
            assert!((x - 0.7).abs() < 1e-15);
        }
        let est = dr_estimate(&[0.3, 0.6], &[0, 1], 2.0 / 3.0, 3).unwrap();
        for (a, b) in est.iter().zip([0.225, 0.675, 0.45]) {
            assert!((a - b).abs() < 1e-15, "{est:?}");
        }
        assert!(matches!(dr_estimate(&[], &[], 0.5, 3), Err(Error::DegenerateRound(_))));
        assert!(dr_estimate(&[0.1], &[0], 0.0, 3).is_err());
        assert!(dr_estimate(&[0.1], &[4], 0.5, 3).is_err());
    }

    #[test]
    fn linearized_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_simplex(&mut rng, 5);
        let r0: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let at_ref = linearized_gradient(&p, &r0, &r0).unwrap();
        let exact = decision_gradient(&p, &r0).unwrap();
        for (a, b) in at_ref.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-15);
        }
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let zero_ref = linearized_gradient(&p, &r, &[0.0; 5]).unwrap();
        for (a, b) in zero_ref.iter().zip(&r) {
            assert!((a + b).abs() < 1e-15);
        }
        assert!(linearized_gradient(&p, &r[..4], &r0).is_err());
    }

    #[test]
    fn linearization_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 6;
        let p = random_simplex(&mut rng, k);
        let r0: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = |h: f64| {
            let r: Vec<f64> = r0.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            let lin = linearized_gradient(&p, &r, &r0).unwrap();
            let exact = decision_gradient(&p, &r).unwrap();
            lin.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        // halving the perturbation should quarter the error
        for h in [0.1, 0.05, 0.025, 0.0125] {
            let ratio = err(h) / err(h / 2.0);
            assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio} at h = {h}");
        }
    }

    #[test]
    fn lipschitz_constants() {
        let k = 7.0;
        assert!((lipschitz_full(&ResponseRange::new(0.0, 1.0 / k).unwrap()) - 1.0 / k).abs() < 1e-15);
        assert!((lipschitz_full(&ResponseRange::new(0.5, 1.0).unwrap()) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lipschitz_full(&ResponseRange::new(0.0, 1.0).unwrap()), 1.0);
        assert_eq!(lipschitz_dr(&ResponseRange::new(0.0, 1.0).unwrap(), 1.0), 3.0);
        assert!((lipschitz_dr(&ResponseRange::new(0.0, 0.05).unwrap(), 0.05) - 2.05).abs() < 1e-15);
        for c in [0.01, 0.1, 0.3, 1.0] {
            let range = ResponseRange::new(0.0, c).unwrap();
            assert_eq!(lipschitz_dr(&range, c), c + 2.0);
        }
    }
}
