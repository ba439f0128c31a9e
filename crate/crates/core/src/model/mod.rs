//! The classification network, the two visualization networks, the training
//! loop, and the evaluation harness.

mod camnet;
mod classifier;
mod config;
mod layers;
mod lstmvis;
mod metrics;
mod train;

pub use camnet::{CamNetModel, CamTrace};
pub use classifier::{ClassifierModel, ClassifierTrace};
pub use config::{channel_multiplier, CamNetConfig, ClassifierConfig, LstmVisConfig};
pub use lstmvis::LstmVisModel;
pub use metrics::{evaluate, metrics_from_confusion, ClassMetrics, Metrics};
pub use train::{train, EpochReport, TrainControl, TrainOptions};

use crate::autodiff::{softmax, BnMode, BnStats, Checkpoint, NodeId, ParamSet, Tape, Tensor};
use crate::error::{Error, Result};

/// A forward graph built to logits: the loss or a probability reduction is
/// appended by the caller.
pub struct LogitsGraph {
    pub logits: NodeId,
    /// Leaf node of every parameter, aligned with the model's [`ParamSet`].
    pub param_nodes: Vec<NodeId>,
}

/// Common surface of the three trainable networks.
pub trait Network {
    /// Checkpoint kind tag.
    fn kind(&self) -> &'static str;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn bn_running(&self) -> &[BnStats];
    fn bn_running_mut(&mut self) -> &mut [BnStats];
    fn input_len(&self) -> usize;
    fn classes(&self) -> usize;
    /// Records the forward pass from an input leaf to logits.
    fn build_logits(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: BnMode,
        param_grads: bool,
    ) -> Result<LogitsGraph>;
    /// Configuration as `key = value` lines for checkpoint metadata.
    fn config_kv(&self) -> String;
}

/// Eval-mode logits for one input.
pub fn forward_logits<N: Network + ?Sized>(net: &N, samples: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = input_leaf(net, &mut tape, samples)?;
    let graph = net.build_logits(&mut tape, x, BnMode::Eval, false)?;
    Ok(tape.value(graph.logits).values().to_vec())
}

/// Eval-mode class probabilities and the predicted class index
/// (argmax, ties toward the lowest index).
pub fn predict<N: Network + ?Sized>(net: &N, samples: &[f64]) -> Result<(usize, Vec<f64>)> {
    let logits = forward_logits(net, samples)?;
    let probs = softmax(&logits);
    Ok((argmax(&probs), probs))
}

pub(crate) fn input_leaf<N: Network + ?Sized>(
    net: &N,
    tape: &mut Tape,
    samples: &[f64],
) -> Result<NodeId> {
    if samples.len() != net.input_len() {
        return Err(Error::shape(
            "network input",
            format!("expected {} samples, got {}", net.input_len(), samples.len()),
        ));
    }
    Ok(tape.leaf(Tensor::vector(samples), false))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Serializes a network (parameters, batch-norm buffers, configuration)
/// into the checkpoint format.
pub fn save_network<N: Network + ?Sized>(net: &N, path: &std::path::Path) -> Result<()> {
    let mut entries: Vec<(String, Tensor)> = net
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.tensor.clone()))
        .collect();
    for (k, stats) in net.bn_running().iter().enumerate() {
        entries.push((format!("__bn{k}.mean"), Tensor::vector(&stats.mean)));
        entries.push((format!("__bn{k}.var"), Tensor::vector(&stats.var)));
    }
    let meta = format!("kind = {}\n{}", net.kind(), net.config_kv());
    Checkpoint { meta, entries }.save(path)
}

/// Loads a checkpoint and verifies its kind tag.
pub(crate) fn load_checkpoint(
    path: &std::path::Path,
    expected_kind: &str,
) -> Result<(Checkpoint, std::collections::BTreeMap<String, String>)> {
    let ckpt = Checkpoint::load(path)?;
    let meta = crate::kvtext::parse(&ckpt.meta)?;
    let kind = crate::kvtext::get(&meta, "kind")?;
    if kind != expected_kind {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a {kind} model, expected {expected_kind}"
        )));
    }
    Ok((ckpt, meta))
}

/// The kind tag stored in a checkpoint, without loading the model.
pub fn checkpoint_kind(path: &std::path::Path) -> Result<String> {
    let ckpt = Checkpoint::load(path)?;
    let meta = crate::kvtext::parse(&ckpt.meta)?;
    Ok(crate::kvtext::get(&meta, "kind")?.to_string())
}

/// Fills a freshly constructed network's parameters and statistics from
/// checkpoint entries, matching by name and shape.
pub(crate) fn apply_checkpoint<N: Network>(net: &mut N, ckpt: &Checkpoint) -> Result<()> {
    for i in 0..net.params().len() {
        let name = net.params().get(i).name.clone();
        let stored = ckpt
            .entry(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))?;
        if stored.shape() != net.params().tensor(i).shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name:?} has shape {:?}, expected {:?}",
                stored.shape(),
                net.params().tensor(i).shape()
            )));
        }
        *net.params_mut().tensor_mut(i) = stored.clone();
    }
    for k in 0..net.bn_running().len() {
        let mean = ckpt
            .entry(&format!("__bn{k}.mean"))
            .ok_or_else(|| Error::Checkpoint(format!("missing batch-norm buffer {k}")))?;
        let var = ckpt
            .entry(&format!("__bn{k}.var"))
            .ok_or_else(|| Error::Checkpoint(format!("missing batch-norm buffer {k}")))?;
        let stats = &mut net.bn_running_mut()[k];
        if mean.numel() != stats.mean.len() || var.numel() != stats.var.len() {
            return Err(Error::Checkpoint(format!(
                "batch-norm buffer {k} has the wrong width"
            )));
        }
        stats.mean = mean.values().to_vec();
        stats.var = var.values().to_vec();
    }
    Ok(())
}

#[cfg(test)]
mod tests;
