use rand::seq::SliceRandom;
use rand::Rng;

use super::data::ClientDataset;
use super::model::{gradient, mean_loss, GlobalModel};
use crate::error::{Error, Result};

/// Local optimization settings for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

/// Identifies a client invocation for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientTask {
    pub round: usize,
    pub client: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    /// Mean training loss of the received model, before any local step.
    pub loss_before: f64,
    /// `θ_received − θ_after`.
    pub delta: Vec<f64>,
}

/// Evaluates the received model, then runs `epochs` passes of minibatch SGD
/// over a fresh shuffle of the training split each epoch.
pub fn client_update<R: Rng>(
    model: &GlobalModel,
    data: &ClientDataset,
    opts: &LocalTraining,
    task: ClientTask,
    rng: &mut R,
) -> Result<LocalResult> {
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::InvalidInput(format!("client {} has no training samples", task.client)));
    }
    let diverged = || Error::Divergence {
        round: task.round,
        client: task.client,
    };
    let loss_before = mean_loss(&model.theta, train);
    if !loss_before.is_finite() {
        return Err(diverged());
    }

    let mut theta = model.theta.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(rng);
        for rows in order.chunks(opts.batch.max(1)) {
            let g = gradient(&theta, train, rows);
            for (w, gi) in theta.iter_mut().zip(&g) {
                *w -= opts.lr * (gi + opts.weight_decay * *w);
            }
        }
    }
    if theta.iter().any(|w| !w.is_finite()) {
        return Err(diverged());
    }
    let delta = model.theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
    Ok(LocalResult { loss_before, delta })
}
