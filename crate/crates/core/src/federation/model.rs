//! Multinomial logistic regression on a flat parameter vector.
//!
//! Layout: the `classes × dim` weight matrix in row-major order followed by
//! `classes` biases.

use super::data::Samples;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub theta: Vec<f64>,
}

impl GlobalModel {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            theta: vec![0.0; param_count(dim, classes)],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }
}

pub fn param_count(dim: usize, classes: usize) -> usize {
    classes * (dim + 1)
}

fn classes_of(theta: &[f64], dim: usize) -> usize {
    theta.len() / (dim + 1)
}

/// Log-softmax of the class scores of `x`, written into `out`.
fn log_probs(theta: &[f64], x: &[f64], out: &mut [f64]) {
    let dim = x.len();
    let classes = out.len();
    let (w, bias) = theta.split_at(classes * dim);
    for (c, o) in out.iter_mut().enumerate() {
        *o = bias[c] + w[c * dim..(c + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + out.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    out.iter_mut().for_each(|s| *s -= lse);
}

/// Mean cross-entropy over `samples`.
pub fn mean_loss(theta: &[f64], samples: &Samples) -> f64 {
    let classes = classes_of(theta, samples.dim);
    let mut lp = vec![0.0; classes];
    let total: f64 = (0..samples.len())
        .map(|i| {
            log_probs(theta, samples.row(i), &mut lp);
            -lp[samples.labels[i]]
        })
        .sum();
    total / samples.len() as f64
}

/// Gradient of the mean cross-entropy over the rows listed in `rows`.
pub fn gradient(theta: &[f64], samples: &Samples, rows: &[usize]) -> Vec<f64> {
    let dim = samples.dim;
    let classes = classes_of(theta, dim);
    let mut grad = vec![0.0; theta.len()];
    let mut lp = vec![0.0; classes];
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        let x = samples.row(i);
        log_probs(theta, x, &mut lp);
        for c in 0..classes {
            let residual = scale * (lp[c].exp() - f64::from(c == samples.labels[i]));
            grad[c * dim..(c + 1) * dim].iter_mut().zip(x).for_each(|(g, xj)| *g += residual * xj);
            grad[classes * dim + c] += residual;
        }
    }
    grad
}

/// Fraction of correctly classified samples (lowest class index wins ties).
pub fn accuracy(theta: &[f64], samples: &Samples) -> f64 {
    let classes = classes_of(theta, samples.dim);
    let mut lp = vec![0.0; classes];
    let correct = (0..samples.len())
        .filter(|&i| {
            log_probs(theta, samples.row(i), &mut lp);
            let pred = lp
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (c, &v)| if v > bv { (c, v) } else { (bi, bv) })
                .0;
            pred == samples.labels[i]
        })
        .count();
    correct as f64 / samples.len() as f64
}
