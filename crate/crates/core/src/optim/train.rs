use std::borrow::Cow;
use std::time::{Duration, Instant};

use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::fisher::ReconstructedNetwork;
use crate::linalg::Matrix;
use crate::nn::{accuracy, backward, cross_entropy, forward, loss_ce_l2, Mode, Network};

use super::{apply_step, sngd_train_step, OptimizerConfig, OptimizerKind, OptimizerState};

/// A network in the parameterization its optimizer trains.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Plain(Network),
    Reconstructed(ReconstructedNetwork),
}

impl Model {
    /// Rebuilds `net` with Fisher sublayers when `cfg` is SNGD.
    pub fn for_optimizer(net: Network, cfg: &OptimizerConfig) -> Result<Self> {
        match cfg.kind {
            OptimizerKind::Sngd => Ok(Model::Reconstructed(ReconstructedNetwork::from_network(
                &net,
                cfg.sngd.lambda,
                cfg.sngd.rho,
            )?)),
            _ => Ok(Model::Plain(net)),
        }
    }

    /// The plain network computing the same function.
    pub fn effective_network(&self) -> Result<Cow<'_, Network>> {
        match self {
            Model::Plain(net) => Ok(Cow::Borrowed(net)),
            Model::Reconstructed(rec) => Ok(Cow::Owned(rec.effective_network()?)),
        }
    }
}

/// Summary of one pass over the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Unweighted mean of the per-batch training objective.
    pub mean_loss: f64,
    pub steps: usize,
    pub refreshes: usize,
    pub sqrt_iterations: usize,
    pub fallbacks: usize,
    pub wall: Duration,
}

/// Forward, loss, backward and update for a plain network. Returns the batch
/// loss before the update.
pub fn first_order_train_step(
    net: &mut Network,
    inputs: &Matrix,
    targets: &[usize],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    l2: f64,
) -> Result<f64> {
    let cache = forward(net, inputs, Mode::Train)?;
    let loss = loss_ce_l2(&cache.probabilities, targets, net, l2)?;
    let grads = backward(net, &cache, targets, l2)?;
    net.update_running_stats(&cache)?;
    apply_step(&mut net.params_mut(), &grads, cfg, state)?;
    state.step_counter += 1;
    Ok(loss)
}

/// One epoch over `dataset` in the order given by `plan`.
pub fn train_epoch(
    model: &mut Model,
    dataset: &Dataset,
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    plan: &BatchPlan,
    l2: f64,
) -> Result<EpochMetrics> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset(
            "no batches: the training set is empty".into(),
        ));
    }
    let start = Instant::now();
    let mut metrics = EpochMetrics {
        mean_loss: 0.0,
        steps: 0,
        refreshes: 0,
        sqrt_iterations: 0,
        fallbacks: 0,
        wall: Duration::ZERO,
    };
    let mut total = 0.0;
    for batch in batches(dataset, plan) {
        let loss = match (&mut *model, cfg.kind) {
            (Model::Reconstructed(rec), OptimizerKind::Sngd) => {
                let out = sngd_train_step(rec, &batch.inputs, &batch.labels, cfg, state, l2)?;
                metrics.refreshes += out.refreshes;
                metrics.sqrt_iterations += out.sqrt_iterations;
                metrics.fallbacks += out.fallbacks;
                out.loss
            }
            (Model::Plain(net), kind) if kind != OptimizerKind::Sngd => {
                first_order_train_step(net, &batch.inputs, &batch.labels, cfg, state, l2)?
            }
            _ => {
                return Err(Error::Optimizer(format!(
                    "optimizer '{}' does not match the model parameterization",
                    cfg.kind
                )))
            }
        };
        total += loss;
        metrics.steps += 1;
    }
    metrics.mean_loss = total / metrics.steps as f64;
    metrics.wall = start.elapsed();
    Ok(metrics)
}

/// Cross-entropy (no regularizer) and accuracy on a held-out set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

const EVAL_CHUNK: usize = 1000;

/// Evaluates in inference mode, in fixed-size chunks.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    let net = model.effective_network()?;
    let n = dataset.len();
    let (mut loss, mut hits) = (0.0, 0.0);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = dataset.select(&idx);
        let cache = forward(&net, &x, Mode::Eval)?;
        let rows = (end - start) as f64;
        loss += cross_entropy(&cache.probabilities, &y)? * rows;
        hits += accuracy(&cache.probabilities, &y) * rows;
        start = end;
    }
    Ok(Evaluation {
        loss: loss / n as f64,
        accuracy: hits / n as f64,
    })
}
