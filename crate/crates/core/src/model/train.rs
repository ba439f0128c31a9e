//! Mini-batch training with momentum SGD.
//!
//! Batch parallelism: each sample in a batch records its own tape and the
//! per-sample gradients are summed in sample order afterwards, so results
//! are bit-identical regardless of the worker count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{BnMode, BnObservation, SgdMomentum, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::signal::Window;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of each batch's statistics folded into the running
    /// batch-norm buffers.
    pub bn_momentum: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 0.005,
            momentum: 0.7,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            bn_momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Returned by the per-epoch callback to continue or stop early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainControl {
    Continue,
    Stop,
}

struct SampleResult {
    loss: f64,
    grads: Vec<Tensor>,
    bn_obs: Vec<BnObservation>,
}

/// Trains `net` in place, returning the per-epoch mean loss curve. The
/// callback fires after every epoch (checkpointing, early exit).
/// Deterministic for a fixed seed and dataset order.
pub fn train<N, F>(
    net: &mut N,
    data: &[Window],
    opts: &TrainOptions,
    mut on_epoch: F,
) -> Result<Vec<f64>>
where
    N: Network + Sync,
    F: FnMut(&N, &EpochReport) -> TrainControl,
{
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".to_string()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Contract("batch size must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut optimizer = SgdMomentum::new(opts.lr, opts.momentum);
    let mut curve = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;

        for (batch_no, chunk) in order.chunks(opts.batch_size).enumerate() {
            let results: Vec<Result<SampleResult>> = chunk
                .par_iter()
                .map(|&i| sample_pass(net, &data[i]))
                .collect();

            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            let mut grads: Vec<Tensor> = (0..net.params().len())
                .map(|i| Tensor::zeros(net.params().tensor(i).shape().to_vec()))
                .collect();
            let mut bn_acc: Vec<Option<(Vec<f64>, Vec<f64>)>> =
                vec![None; net.bn_running().len()];
            for result in results {
                let sample = result?;
                batch_loss += sample.loss * scale;
                for (acc, g) in grads.iter_mut().zip(&sample.grads) {
                    for (a, b) in acc.values_mut().iter_mut().zip(g.values()) {
                        *a += b * scale;
                    }
                }
                for obs in sample.bn_obs {
                    let slot = &mut bn_acc[obs.layer_key];
                    match slot {
                        Some((m, v)) => {
                            for (a, b) in m.iter_mut().zip(&obs.mean) {
                                *a += b * scale;
                            }
                            for (a, b) in v.iter_mut().zip(&obs.var) {
                                *a += b * scale;
                            }
                        }
                        None => {
                            *slot = Some((
                                obs.mean.iter().map(|m| m * scale).collect(),
                                obs.var.iter().map(|v| v * scale).collect(),
                            ));
                        }
                    }
                }
            }

            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss diverged at epoch {epoch}, batch {batch_no}"
                )));
            }
            optimizer.step(net.params_mut(), &grads)?;
            if !net.params().all_finite() {
                return Err(Error::Numeric(format!(
                    "parameters became non-finite at epoch {epoch}, batch {batch_no}"
                )));
            }
            for (key, acc) in bn_acc.into_iter().enumerate() {
                if let Some((mean, var)) = acc {
                    let stats = &mut net.bn_running_mut()[key];
                    for (r, m) in stats.mean.iter_mut().zip(&mean) {
                        *r = (1.0 - opts.bn_momentum) * *r + opts.bn_momentum * m;
                    }
                    for (r, v) in stats.var.iter_mut().zip(&var) {
                        *r = (1.0 - opts.bn_momentum) * *r + opts.bn_momentum * v;
                    }
                }
            }
            epoch_loss += batch_loss * chunk.len() as f64;
        }

        let mean_loss = epoch_loss / data.len() as f64;
        curve.push(mean_loss);
        let report = EpochReport { epoch, mean_loss };
        if on_epoch(net, &report) == TrainControl::Stop {
            break;
        }
    }
    Ok(curve)
}

fn sample_pass<N: Network>(net: &N, window: &Window) -> Result<SampleResult> {
    let mut tape = Tape::new();
    let x = crate::model::input_leaf(net, &mut tape, &window.samples)?;
    let graph = net.build_logits(&mut tape, x, BnMode::Train, true)?;
    let loss = tape.softmax_cross_entropy(graph.logits, window.label.index())?;
    tape.backward(loss)?;
    let grads = graph
        .param_nodes
        .iter()
        .map(|id| tape.grad_tensor(*id))
        .collect();
    Ok(SampleResult {
        loss: tape.value(loss).item(),
        grads,
        bn_obs: tape.take_bn_observations(),
    })
}
