//! Synthetic client datasets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

use super::config::SyntheticDataSpec;
use crate::error::Result;
use crate::rng::{StreamKind, Streams};

/// Fraction of each client's samples held out for evaluation.
pub const TEST_FRACTION: f64 = 0.2;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Samples {
    fn empty(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, x: &[f64], y: usize) {
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    /// Empirical label distribution over `num_classes` classes.
    pub fn label_histogram(&self, num_classes: usize) -> Vec<f64> {
        let mut h = vec![0.0; num_classes];
        for &y in &self.labels {
            h[y] += 1.0;
        }
        let n = self.len().max(1) as f64;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub train: Samples,
    pub test: Samples,
}

impl ClientDataset {
    pub fn num_train(&self) -> usize {
        self.train.len()
    }
}

/// Dirichlet draw computed in log space so tiny concentrations do not
/// underflow: `log G(a) = log G(a + 1) + log(U) / a`.
fn dirichlet<R: Rng>(rng: &mut R, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / concentration
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Generates `k` client datasets, deterministic in `seed`.
///
/// Features are standardized with statistics pooled over every client, then
/// each client is split 80/20 into train/test, stratified by label.
pub fn generate_federation(spec: &SyntheticDataSpec, k: usize, batch: usize, seed: u64) -> Result<Vec<ClientDataset>> {
    spec.validate(batch)?;
    let streams = Streams::new(seed);
    let d = spec.input_dim;
    let classes = spec.num_classes;

    let mut rng = streams.stream(StreamKind::DataGen, 0, 0);
    let centers: Vec<f64> = (0..classes * d)
        .map(|_| spec.class_separation * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut pooled: Vec<Samples> = Vec::with_capacity(k);
    for client in 0..k {
        let mut rng = streams.stream(StreamKind::DataGen, 1, client as u64);
        let lo = spec.samples_mean - spec.samples_spread;
        let n = rng.random_range(lo..=spec.samples_mean + spec.samples_spread);
        let mix = dirichlet(&mut rng, spec.concentration, classes);
        let shift_dist = Normal::new(0.0, spec.feature_shift).expect("finite shift");
        let shift: Vec<f64> = (0..d).map(|_| shift_dist.sample(&mut rng)).collect();
        let mut samples = Samples::empty(d);
        let mut x = vec![0.0; d];
        for _ in 0..n {
            let y = categorical(&mut rng, &mix);
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = centers[y * d + j] + shift[j] + rng.sample::<f64, _>(StandardNormal);
            }
            samples.push(&x, y);
        }
        pooled.push(samples);
    }

    standardize(&mut pooled);

    Ok(pooled
        .into_iter()
        .enumerate()
        .map(|(client, samples)| {
            let mut rng = streams.stream(StreamKind::DataGen, 2, client as u64);
            split(samples, classes, &mut rng)
        })
        .collect())
}

fn standardize(clients: &mut [Samples]) {
    let d = clients[0].dim;
    let total: usize = clients.iter().map(Samples::len).sum();
    let mut mean = vec![0.0; d];
    for s in clients.iter() {
        for row in s.features.chunks_exact(d) {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);
    let mut var = vec![0.0; d];
    for s in clients.iter() {
        for row in s.features.chunks_exact(d) {
            var.iter_mut().zip(row.iter().zip(&mean)).for_each(|(v, (x, m))| *v += (x - m).powi(2));
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / total as f64).sqrt().max(1e-12)).collect();
    for s in clients.iter_mut() {
        for row in s.features.chunks_exact_mut(d) {
            for ((x, m), sd) in row.iter_mut().zip(&mean).zip(&std) {
                *x = (*x - m) / sd;
            }
        }
    }
}

fn split<R: Rng>(samples: Samples, classes: usize, rng: &mut R) -> ClientDataset {
    let d = samples.dim;
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in samples.labels.iter().enumerate() {
        by_label[y].push(i);
    }
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for group in by_label.iter_mut() {
        group.shuffle(rng);
        let n_test = (TEST_FRACTION * group.len() as f64).round() as usize;
        test_idx.extend_from_slice(&group[..n_test]);
        train_idx.extend_from_slice(&group[n_test..]);
    }
    if test_idx.is_empty() {
        // every class too small to stratify; hold out one sample of the largest class
        let largest = (0..classes).max_by_key(|&c| (by_label[c].len(), std::cmp::Reverse(c))).unwrap_or(0);
        let moved = by_label[largest][0];
        train_idx.retain(|&i| i != moved);
        test_idx.push(moved);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let take = |idx: &[usize]| {
        let mut out = Samples::empty(d);
        for &i in idx {
            out.push(samples.row(i), samples.labels[i]);
        }
        out
    };
    ClientDataset {
        train: take(&train_idx),
        test: take(&test_idx),
    }
}
