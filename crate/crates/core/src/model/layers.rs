//! Shared layer plumbing: parameter registration at construction time and
//! graph application at forward time. Registration records indices into the
//! model's [`ParamSet`] (and batch-norm buffer list); application replays
//! those indices onto a tape, so the two walks cannot drift apart.

use rand::Rng;

use crate::autodiff::{BnMode, BnStats, NodeId, Padding, ParamSet, Tape, Tensor};
use crate::error::Result;

pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BnIdx {
    pub gamma: usize,
    pub beta: usize,
    /// Index into the model's running-statistics list.
    pub key: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DenseIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIdx {
    pub w_ih: usize,
    pub w_hh: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvBn {
    pub conv: ConvIdx,
    pub bn: BnIdx,
}

/// One residual unit: entry pooling, two convolutions with normalization,
/// and an optionally projected skip path.
#[derive(Debug, Clone)]
pub(crate) struct ResUnitIdx {
    pub pool_stride: usize,
    pub cb1: ConvBn,
    pub conv2: ConvIdx,
    pub bn2: BnIdx,
    pub skip: Option<ConvBn>,
}

fn fan_in_uniform(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

pub(crate) fn register_conv(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    name: &str,
    c_out: usize,
    c_in: usize,
    kernel: usize,
) -> ConvIdx {
    let w = params.add(
        format!("{name}.w"),
        fan_in_uniform(rng, vec![c_out, c_in, kernel], c_in * kernel),
    );
    let b = params.add(format!("{name}.b"), Tensor::zeros(vec![c_out]));
    ConvIdx { w, b }
}

pub(crate) fn register_bn(
    params: &mut ParamSet,
    bn_running: &mut Vec<BnStats>,
    name: &str,
    channels: usize,
) -> BnIdx {
    let gamma = params.add(format!("{name}.gamma"), Tensor::filled(vec![channels], 1.0));
    let beta = params.add(format!("{name}.beta"), Tensor::zeros(vec![channels]));
    let key = bn_running.len();
    bn_running.push(BnStats::identity(channels));
    BnIdx { gamma, beta, key }
}

pub(crate) fn register_dense(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    name: &str,
    out_dim: usize,
    in_dim: usize,
) -> DenseIdx {
    let w = params.add(
        format!("{name}.w"),
        fan_in_uniform(rng, vec![out_dim, in_dim], in_dim),
    );
    let b = params.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
    DenseIdx { w, b }
}

/// LSTM gate weights: uniform on `±1/sqrt(hidden)` with the forget-gate bias
/// block set to 1.
pub(crate) fn register_lstm(
    params: &mut ParamSet,
    rng: &mut impl Rng,
    name: &str,
    hidden: usize,
    input_dim: usize,
) -> LstmIdx {
    let w_ih = params.add(
        format!("{name}.w_ih"),
        fan_in_uniform(rng, vec![4 * hidden, input_dim], hidden),
    );
    let w_hh = params.add(
        format!("{name}.w_hh"),
        fan_in_uniform(rng, vec![4 * hidden, hidden], hidden),
    );
    let mut bias = Tensor::zeros(vec![4 * hidden]);
    for j in hidden..2 * hidden {
        bias.values_mut()[j] = 1.0;
    }
    let b = params.add(format!("{name}.b"), bias);
    LstmIdx { w_ih, w_hh, b }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn register_res_unit(
    params: &mut ParamSet,
    bn_running: &mut Vec<BnStats>,
    rng: &mut impl Rng,
    name: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    pool_stride: usize,
) -> ResUnitIdx {
    let cb1 = ConvBn {
        conv: register_conv(params, rng, &format!("{name}.conv1"), out_channels, in_channels, kernel),
        bn: register_bn(params, bn_running, &format!("{name}.bn1"), out_channels),
    };
    let conv2 = register_conv(params, rng, &format!("{name}.conv2"), out_channels, out_channels, kernel);
    let bn2 = register_bn(params, bn_running, &format!("{name}.bn2"), out_channels);
    let skip = if in_channels != out_channels {
        Some(ConvBn {
            conv: register_conv(params, rng, &format!("{name}.skip"), out_channels, in_channels, 1),
            bn: register_bn(params, bn_running, &format!("{name}.skip_bn"), out_channels),
        })
    } else {
        None
    };
    ResUnitIdx {
        pool_stride,
        cb1,
        conv2,
        bn2,
        skip,
    }
}

/// Forward-time context: the tape, the parameter leaf nodes (aligned with
/// the [`ParamSet`]), and the batch-norm configuration.
pub(crate) struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub param_nodes: &'a [NodeId],
    pub bn_running: &'a [BnStats],
    pub mode: BnMode,
}

impl Ctx<'_> {
    /// Creates leaf nodes for every parameter, in set order.
    pub fn param_leaves(
        tape: &mut Tape,
        params: &ParamSet,
        with_gradients: bool,
    ) -> Vec<NodeId> {
        params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone(), with_gradients))
            .collect()
    }

    pub fn conv(&mut self, x: NodeId, idx: ConvIdx, stride: usize, padding: Padding) -> Result<NodeId> {
        self.tape
            .conv1d(x, self.param_nodes[idx.w], self.param_nodes[idx.b], stride, padding)
    }

    pub fn bn(&mut self, x: NodeId, idx: BnIdx) -> Result<NodeId> {
        self.tape.batchnorm1d(
            x,
            self.param_nodes[idx.gamma],
            self.param_nodes[idx.beta],
            self.mode,
            Some(&self.bn_running[idx.key]),
            BN_EPS,
            idx.key,
        )
    }

    pub fn conv_bn_relu(&mut self, x: NodeId, cb: ConvBn, padding: Padding) -> Result<NodeId> {
        let c = self.conv(x, cb.conv, 1, padding)?;
        let n = self.bn(c, cb.bn)?;
        Ok(self.tape.relu(n))
    }

    pub fn res_unit(&mut self, x: NodeId, unit: &ResUnitIdx) -> Result<NodeId> {
        let pooled = if unit.pool_stride > 1 {
            self.tape.maxpool1d(x, unit.pool_stride, unit.pool_stride)?
        } else {
            x
        };
        let main = self.conv_bn_relu(pooled, unit.cb1, Padding::Same)?;
        let main = self.conv(main, unit.conv2, 1, Padding::Same)?;
        let main = self.bn(main, unit.bn2)?;
        let shortcut = match &unit.skip {
            Some(cb) => {
                let s = self.conv(pooled, cb.conv, 1, Padding::Same)?;
                self.bn(s, cb.bn)?
            }
            None => pooled,
        };
        let sum = self.tape.add(main, shortcut)?;
        Ok(self.tape.relu(sum))
    }

    pub fn dense(&mut self, x: NodeId, idx: DenseIdx) -> Result<NodeId> {
        self.tape
            .dense(x, self.param_nodes[idx.w], self.param_nodes[idx.b])
    }

    pub fn lstm(&mut self, x: NodeId, idx: LstmIdx) -> Result<NodeId> {
        self.tape.lstm(
            x,
            self.param_nodes[idx.w_ih],
            self.param_nodes[idx.w_hh],
            self.param_nodes[idx.b],
        )
    }
}
