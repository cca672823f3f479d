//! Geometry of the probability simplex: the decision space of the server.
//!
//! Holds the [`SimplexVector`] newtype, the positive-definite metric used by
//! the Newton-step aggregator, and the three projections/normalizations the
//! aggregators need.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on the unit-mass invariant.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Iterate-movement tolerance of the metric projection.
pub const PROJECTION_TOL: f64 = 1e-8;

/// A point of the probability simplex: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates `entries` against the simplex invariants.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("simplex vector must have at least one entry".into()));
        }
        if let Some((i, x)) = entries.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidInput(format!("entry {i} = {x} is not a nonnegative finite number")));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("entries sum to {total}, expected 1")));
        }
        Ok(Self(entries))
    }

    /// Normalizes nonnegative weights to unit mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be nonnegative and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights have zero total mass".into()));
        }
        Ok(Self(weights.iter().map(|w| w / total).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform simplex point needs k >= 1");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k, "vertex index {i} out of range for k = {k}");
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        Self(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(Self::new(entries.clone()).is_ok(), "not a simplex point: {entries:?}");
        Self(entries)
    }
}

impl AsRef<[f64]> for SimplexVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Symmetric positive-definite K×K matrix, the metric of the Newton step.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

impl PsdMatrix {
    /// `alpha * I`.
    pub fn scaled_identity(k: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidMatrix(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self(DMatrix::from_diagonal_element(k, k, alpha)))
    }

    /// Wraps a dense matrix after checking symmetry and positive definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMatrix("matrix is not square".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::InvalidMatrix(format!("matrix is not symmetric (max deviation {asym:.3e})")));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::InvalidMatrix("matrix is not positive definite".into()));
        }
        Ok(Self(m))
    }

    /// Adds `beta * g gᵀ`.
    pub fn add_outer(&mut self, beta: f64, g: &[f64]) {
        let g = DVector::from_column_slice(g);
        self.0.ger(beta, &g, &g, 1.0);
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput("empty vector".into()));
    }
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("entry {i} is not finite"))),
        None => Ok(()),
    }
}

/// Sort-and-threshold Euclidean projection; assumes finite input.
fn euclidean_projection(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|vi| (vi - tau).max(0.0)).collect();
    // absorb rounding so the unit-mass invariant holds to machine precision
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|xi| *xi /= total);
    x
}

/// Euclidean projection onto the simplex: `argmin_{x ∈ Δ} ‖x − v‖²`.
pub fn project_euclidean(v: &[f64]) -> Result<SimplexVector> {
    check_finite(v)?;
    Ok(SimplexVector::from_vec_unchecked(euclidean_projection(v)))
}

fn is_on_simplex(v: &[f64]) -> bool {
    v.iter().all(|x| *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-12
}

struct Quadratic<'a> {
    b: &'a DMatrix<f64>,
    v: &'a [f64],
    bv: DVector<f64>,
}

impl Quadratic<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(self.v).map(|(a, b)| a - b));
        0.5 * d.dot(&(self.b * &d))
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (self.b * x - &self.bv).iter().copied().collect()
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Metric projection onto the simplex: `argmin_{x ∈ Δ} (x − v)ᵀ B (x − v)`.
///
/// Runs accelerated projected gradient with backtracking and adaptive restart,
/// then refines the identified face by solving its KKT system exactly.
pub fn project_mahalanobis(v: &[f64], b: &PsdMatrix) -> Result<SimplexVector> {
    check_finite(v)?;
    let k = v.len();
    if b.dim() != k {
        return Err(Error::InvalidInput(format!("matrix is {0}x{0} but vector has {k} entries", b.dim())));
    }
    let m = b.matrix();
    if m.clone().cholesky().is_none() {
        return Err(Error::InvalidMatrix("matrix is not positive definite".into()));
    }
    if is_on_simplex(v) {
        let total: f64 = v.iter().sum();
        return Ok(SimplexVector::from_vec_unchecked(v.iter().map(|x| x / total).collect()));
    }
    if k == 1 {
        return Ok(SimplexVector::uniform(1));
    }

    let q = Quadratic {
        b: m,
        v,
        bv: m * DVector::from_column_slice(v),
    };
    let cap = (10.0 * k as f64 * -PROJECTION_TOL.log10()).ceil() as usize;

    let mut x = euclidean_projection(v);
    let mut fx = q.value(&x);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut lip = (m.trace() / k as f64).max(f64::MIN_POSITIVE);
    let mut movement = f64::INFINITY;
    let mut converged = false;

    for _ in 0..cap {
        let gx = q.gradient(&x);
        let probe: Vec<f64> = x.iter().zip(&gx).map(|(xi, gi)| xi - gi / lip).collect();
        movement = linf(&euclidean_projection(&probe), &x);
        if movement < PROJECTION_TOL {
            converged = true;
            break;
        }

        let gy = q.gradient(&y);
        let fy = q.value(&y);
        let z = loop {
            let step: Vec<f64> = y.iter().zip(&gy).map(|(yi, gi)| yi - gi / lip).collect();
            let z = euclidean_projection(&step);
            let diff: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy
                + gy.iter().zip(&diff).map(|(g, d)| g * d).sum::<f64>()
                + 0.5 * lip * diff.iter().map(|d| d * d).sum::<f64>();
            if q.value(&z) <= model + 1e-15 * fy.abs().max(1.0) || !lip.is_finite() {
                break z;
            }
            lip *= 2.0;
        };
        let fz = q.value(&z);
        if fz > fx {
            // restart momentum from the last monotone iterate
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        y = z.iter().zip(&x).map(|(zi, xi)| zi + beta * (zi - xi)).collect();
        x = z;
        fx = fz;
        momentum = next;
    }

    // a face solution that passes the KKT checks is the exact minimizer
    if let Some(refined) = refine_face(&q, &x) {
        return Ok(SimplexVector::from_vec_unchecked(refined));
    }
    if converged {
        return Ok(SimplexVector::from_vec_unchecked(x));
    }
    Err(Error::Convergence {
        solver: "metric simplex projection",
        iterations: cap,
        residual: movement,
        best: x,
    })
}

/// Exact minimizer on the face spanned by `support`, or `None` when the face
/// system is singular.
fn solve_face(q: &Quadratic<'_>, support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let s = support.len();
    let sub = DMatrix::from_fn(s, s, |r, c| q.b[(support[r], support[c])]);
    let chol = sub.cholesky()?;
    let rhs = DVector::from_iterator(s, support.iter().map(|&i| q.bv[i]));
    let w = chol.solve(&rhs);
    let u = chol.solve(&DVector::from_element(s, 1.0));
    let mu = (1.0 - w.sum()) / u.sum();
    let mut x = vec![0.0; q.v.len()];
    for (j, &i) in support.iter().enumerate() {
        x[i] = w[j] + mu * u[j];
    }
    Some((x, mu))
}

/// Active-set refinement started from the support of `x`.
fn refine_face(q: &Quadratic<'_>, x: &[f64]) -> Option<Vec<f64>> {
    let k = x.len();
    let mut support: Vec<usize> = (0..k).filter(|&i| x[i] > 0.0).collect();
    let scale = q.b.amax().max(1.0);
    for _ in 0..2 * k {
        if support.is_empty() {
            return None;
        }
        let (candidate, mu) = solve_face(q, &support)?;
        // drop the most negative coordinate of the face solution
        if let Some(&worst) = support
            .iter()
            .filter(|&&i| candidate[i] < 0.0)
            .min_by(|&&a, &&b| candidate[a].total_cmp(&candidate[b]))
        {
            support.retain(|&i| i != worst);
            continue;
        }
        // add the coordinate with the most negative multiplier
        let grad = q.gradient(&candidate);
        let violator = (0..k)
            .filter(|i| !support.contains(i))
            .filter(|&i| grad[i] - mu < -1e-10 * scale)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        match violator {
            Some(j) => {
                support.push(j);
                support.sort_unstable();
            }
            None => {
                let total: f64 = candidate.iter().sum();
                return Some(candidate.iter().map(|c| c.max(0.0) / total).collect());
            }
        }
    }
    None
}

/// Renormalizes the entries of `p` listed in `subset` to unit mass, in the
/// order given by `subset`.
pub fn normalize_subset(p: &SimplexVector, subset: &[usize]) -> Result<SimplexVector> {
    if subset.is_empty() {
        return Err(Error::DegenerateSubset("empty index set".into()));
    }
    let k = p.len();
    let mut seen = vec![false; k];
    for &i in subset {
        if i >= k {
            return Err(Error::InvalidInput(format!("index {i} out of range for {k} clients")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInput(format!("index {i} listed twice")));
        }
    }
    let mass: f64 = subset.iter().map(|&i| p.0[i]).sum();
    if mass <= 0.0 {
        return Err(Error::DegenerateSubset("selected entries carry zero mass".into()));
    }
    Ok(SimplexVector(subset.iter().map(|&i| p.0[i] / mass).collect()))
}
