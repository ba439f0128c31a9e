//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes in
//! topological order. [`Tape::backward`] sweeps the list in reverse exactly
//! once, accumulating gradients for every node that requires them. The
//! operation set is deliberately small: exactly the layers the networks in
//! this crate are made of.

use crate::autodiff::kernels::{self, ConvDims, LstmCache};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Padding mode for [`Tape::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output length `ceil(len / stride)`; zero padding split left/right
    /// with the extra column on the right.
    Same,
    /// No padding; output length `floor((len - kernel) / stride) + 1`.
    Valid,
}

/// Whether batch normalization uses statistics of the current input or the
/// running statistics collected during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running per-channel statistics for one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    /// Identity statistics: mean 0, variance 1 per channel.
    pub fn identity(channels: usize) -> Self {
        BnStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Per-channel statistics observed by one train-mode batch-norm application,
/// tagged with the caller's layer key so a trainer can fold them into the
/// right running buffers.
#[derive(Debug, Clone)]
pub struct BnObservation {
    pub layer_key: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Reshape {
        x: NodeId,
    },
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        dims: ConvDims,
    },
    BatchNorm1d {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: BnMode,
        xhat: Vec<f64>,
        invstd: Vec<f64>,
    },
    Relu {
        x: NodeId,
    },
    MaxPool1d {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Gap {
        x: NodeId,
    },
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ElemMul {
        a: NodeId,
        b: NodeId,
    },
    Affine {
        x: NodeId,
        mul: f64,
    },
    Sum {
        x: NodeId,
    },
    AbsSum {
        x: NodeId,
    },
    TotalVariation {
        x: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        label: usize,
        probs: Vec<f64>,
    },
    SoftmaxProb {
        logits: NodeId,
        class: usize,
        probs: Vec<f64>,
    },
    Lstm {
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b: NodeId,
        cache: Box<LstmCache>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    bn_observations: Vec<BnObservation>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Records an input node. Only leaves may require gradients directly;
    /// interior nodes inherit the flag from their operands.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value), false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Gradient buffer for `id` after [`Tape::backward`] has run. `None`
    /// when no gradient reached the node (or it did not require one).
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }

    /// Gradient of `id` as a tensor of the node's shape, zeros if absent.
    pub fn grad_tensor(&self, id: NodeId) -> Tensor {
        let shape = self.nodes[id].value.shape().to_vec();
        match self.grad(id) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("grad shape matches node"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Statistics recorded by train-mode batch-norm nodes since the last
    /// call, in application order.
    pub fn take_bn_observations(&mut self) -> Vec<BnObservation> {
        std::mem::take(&mut self.bn_observations)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.nodes.len() - 1
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[*id].requires_grad)
    }

    /// Views a node under a new shape without copying.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.nodes[x].value.clone().reshaped(shape)?;
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(value, rg, Op::Reshape { x }))
    }

    /// 1-D cross-correlation of `x: [c_in, len]` with `w: [c_out, c_in, k]`
    /// plus bias `b: [c_out]`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: Padding,
    ) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape();
        let ws = self.nodes[w].value.shape();
        let bs = self.nodes[b].value.shape();
        if xs.len() != 2 || ws.len() != 3 || bs.len() != 1 {
            return Err(Error::shape(
                "conv1d",
                format!("x {:?}, w {:?}, b {:?}", xs, ws, bs),
            ));
        }
        let (c_in, len) = (xs[0], xs[1]);
        let (c_out, w_cin, kernel) = (ws[0], ws[1], ws[2]);
        if w_cin != c_in || bs[0] != c_out {
            return Err(Error::shape(
                "conv1d",
                format!("x has {} channels, w expects {}, b {:?}", c_in, w_cin, bs),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv1d", "stride must be >= 1".to_string()));
        }
        let (out_len, pad_left) = match padding {
            Padding::Same => {
                let out_len = len.div_ceil(stride);
                let total = ((out_len - 1) * stride + kernel).saturating_sub(len);
                (out_len, total / 2)
            }
            Padding::Valid => {
                if kernel > len {
                    return Err(Error::shape(
                        "conv1d",
                        format!("kernel {} exceeds input length {}", kernel, len),
                    ));
                }
                ((len - kernel) / stride + 1, 0)
            }
        };
        let dims = ConvDims {
            c_in,
            c_out,
            len,
            kernel,
            stride,
            pad_left,
            out_len,
        };
        let xv = self.nodes[x].value.values();
        let wv = self.nodes[w].value.values();
        let bv = self.nodes[b].value.values();
        let out = kernels::conv1d_forward(xv, wv, bv, &dims);
        let value = Tensor::new(vec![c_out, out_len], out)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(value, rg, Op::Conv1d { x, w, b, dims }))
    }

    /// Per-channel normalization of `x: [c, len]` over the spatial axis.
    /// Train mode uses the input's own statistics and records them for the
    /// caller; eval mode requires running statistics.
    pub fn batchnorm1d(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: BnMode,
        running: Option<&BnStats>,
        eps: f64,
        layer_key: usize,
    ) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape();
        if xs.len() != 2 {
            return Err(Error::shape("batchnorm1d", format!("x {:?}", xs)));
        }
        let (c, len) = (xs[0], xs[1]);
        if self.nodes[gamma].value.numel() != c || self.nodes[beta].value.numel() != c {
            return Err(Error::shape(
                "batchnorm1d",
                format!("expected {} scale/shift values", c),
            ));
        }
        let (mean, var) = match mode {
            BnMode::Train => {
                let xv = self.nodes[x].value.values();
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let row = &xv[ch * len..(ch + 1) * len];
                    let m = row.iter().sum::<f64>() / len as f64;
                    let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / len as f64;
                    mean[ch] = m;
                    var[ch] = v;
                }
                self.bn_observations.push(BnObservation {
                    layer_key,
                    mean: mean.clone(),
                    var: var.clone(),
                });
                (mean, var)
            }
            BnMode::Eval => {
                let stats = running.ok_or(Error::UninitializedStatistics)?;
                if stats.mean.len() != c || stats.var.len() != c {
                    return Err(Error::shape(
                        "batchnorm1d",
                        format!("running statistics expect {} channels", c),
                    ));
                }
                (stats.mean.clone(), stats.var.clone())
            }
        };
        let xv = self.nodes[x].value.values();
        let gv = self.nodes[gamma].value.values();
        let bv = self.nodes[beta].value.values();
        let mut xhat = vec![0.0; c * len];
        let mut invstd = vec![0.0; c];
        let mut out = vec![0.0; c * len];
        for ch in 0..c {
            let is = 1.0 / (var[ch] + eps).sqrt();
            invstd[ch] = is;
            for l in 0..len {
                let h = (xv[ch * len + l] - mean[ch]) * is;
                xhat[ch * len + l] = h;
                out[ch * len + l] = gv[ch] * h + bv[ch];
            }
        }
        let value = Tensor::new(vec![c, len], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm1d {
                x,
                gamma,
                beta,
                mode,
                xhat,
                invstd,
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::new(
            self.nodes[x].value.shape().to_vec(),
            self.nodes[x].value.iter().map(|v| v.max(0.0)).collect(),
        )
        .expect("same shape");
        let rg = self.nodes[x].requires_grad;
        self.push(value, rg, Op::Relu { x })
    }

    /// Non-overlapping-or-strided max pooling over the spatial axis of
    /// `x: [c, len]`. Ties break toward the lowest index.
    pub fn maxpool1d(&mut self, x: NodeId, width: usize, stride: usize) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape();
        if xs.len() != 2 {
            return Err(Error::shape("maxpool1d", format!("x {:?}", xs)));
        }
        let (c, len) = (xs[0], xs[1]);
        if width == 0 || stride == 0 || width > len {
            return Err(Error::shape(
                "maxpool1d",
                format!("width {} stride {} on length {}", width, stride, len),
            ));
        }
        let out_len = (len - width) / stride + 1;
        let xv = self.nodes[x].value.values();
        let mut out = vec![0.0; c * out_len];
        let mut argmax = vec![0usize; c * out_len];
        for ch in 0..c {
            for o in 0..out_len {
                let start = o * stride;
                let mut best = xv[ch * len + start];
                let mut best_i = ch * len + start;
                for k in 1..width {
                    let v = xv[ch * len + start + k];
                    if v > best {
                        best = v;
                        best_i = ch * len + start + k;
                    }
                }
                out[ch * out_len + o] = best;
                argmax[ch * out_len + o] = best_i;
            }
        }
        let value = Tensor::new(vec![c, out_len], out)?;
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(value, rg, Op::MaxPool1d { x, argmax }))
    }

    /// Global average pooling: the spatial mean of each channel.
    pub fn gap(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape();
        if xs.len() != 2 {
            return Err(Error::shape("gap", format!("x {:?}", xs)));
        }
        let (c, len) = (xs[0], xs[1]);
        let xv = self.nodes[x].value.values();
        let out: Vec<f64> = (0..c)
            .map(|ch| xv[ch * len..(ch + 1) * len].iter().sum::<f64>() / len as f64)
            .collect();
        let value = Tensor::new(vec![c], out)?;
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(value, rg, Op::Gap { x }))
    }

    /// Fully connected layer `y = W x + b` with `w: [out, in]`. The input is
    /// read as a flat vector of `in` values regardless of its shape.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let ws = self.nodes[w].value.shape();
        if ws.len() != 2 {
            return Err(Error::shape("dense", format!("w {:?}", ws)));
        }
        let (out_dim, in_dim) = (ws[0], ws[1]);
        if self.nodes[x].value.numel() != in_dim || self.nodes[b].value.numel() != out_dim {
            return Err(Error::shape(
                "dense",
                format!(
                    "x has {} values, w {:?}, b has {}",
                    self.nodes[x].value.numel(),
                    ws,
                    self.nodes[b].value.numel()
                ),
            ));
        }
        let xv = self.nodes[x].value.values();
        let wv = self.nodes[w].value.values();
        let bv = self.nodes[b].value.values();
        let out: Vec<f64> = (0..out_dim)
            .map(|r| bv[r] + kernels::dot(&wv[r * in_dim..(r + 1) * in_dim], xv))
            .collect();
        let value = Tensor::new(vec![out_dim], out)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(value, rg, Op::Dense { x, w, b }))
    }

    /// Concatenation of two nodes into one flat vector.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut values = self.nodes[a].value.values().to_vec();
        values.extend_from_slice(self.nodes[b].value.values());
        let value = Tensor::new(vec![values.len()], values).expect("flat concat");
        let rg = self.any_grad(&[a, b]);
        self.push(value, rg, Op::Concat { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn elementwise_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op("elementwise_mul", a, b, |x, y| x * y, |a, b| Op::ElemMul { a, b })
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(Error::shape(
                name,
                format!(
                    "{:?} vs {:?}",
                    self.nodes[a].value.shape(),
                    self.nodes[b].value.shape()
                ),
            ));
        }
        let values = self.nodes[a]
            .value
            .iter()
            .zip(self.nodes[b].value.iter())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(self.nodes[a].value.shape().to_vec(), values)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, op(a, b)))
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let values = self.nodes[x].value.iter().map(|v| mul * v + add).collect();
        let value = Tensor::new(self.nodes[x].value.shape().to_vec(), values).expect("same shape");
        let rg = self.nodes[x].requires_grad;
        self.push(value, rg, Op::Affine { x, mul })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x].value.iter().sum();
        let rg = self.nodes[x].requires_grad;
        self.push(Tensor::scalar(s), rg, Op::Sum { x })
    }

    /// L1 mass: `sum |x_i|`. The subgradient at 0 is taken as 0.
    pub fn abs_sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x].value.iter().map(|v| v.abs()).sum();
        let rg = self.nodes[x].requires_grad;
        self.push(Tensor::scalar(s), rg, Op::AbsSum { x })
    }

    /// Total variation of a flat vector: `sum |x_{t+1} - x_t|`.
    pub fn total_variation(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.values();
        let s: f64 = v.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let rg = self.nodes[x].requires_grad;
        self.push(Tensor::scalar(s), rg, Op::TotalVariation { x })
    }

    /// Fused softmax + negative log likelihood of `label`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.nodes[logits].value.values();
        if label >= z.len() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("label {} out of range for {} classes", label, z.len()),
            ));
        }
        let probs = kernels::softmax(z);
        let loss = -probs[label].ln();
        let rg = self.nodes[logits].requires_grad;
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// Softmax probability of one class as a differentiable scalar.
    pub fn softmax_prob(&mut self, logits: NodeId, class: usize) -> Result<NodeId> {
        let z = self.nodes[logits].value.values();
        if class >= z.len() {
            return Err(Error::shape(
                "softmax_prob",
                format!("class {} out of range for {} classes", class, z.len()),
            ));
        }
        let probs = kernels::softmax(z);
        let p = probs[class];
        let rg = self.nodes[logits].requires_grad;
        Ok(self.push(
            Tensor::scalar(p),
            rg,
            Op::SoftmaxProb {
                logits,
                class,
                probs,
            },
        ))
    }

    /// Many-to-one LSTM over `x: [steps, input_dim]`, returning the final
    /// hidden state `[hidden]`. Weight layout: `w_ih [4*hidden, input_dim]`,
    /// `w_hh [4*hidden, hidden]`, `b [4*hidden]`, gate blocks ordered
    /// input/forget/candidate/output. Initial hidden and cell states are zero.
    pub fn lstm(&mut self, x: NodeId, w_ih: NodeId, w_hh: NodeId, b: NodeId) -> Result<NodeId> {
        let xs = self.nodes[x].value.shape();
        if xs.len() != 2 || xs[0] == 0 {
            return Err(Error::shape("lstm", format!("x {:?}", xs)));
        }
        let (steps, input_dim) = (xs[0], xs[1]);
        let ws = self.nodes[w_ih].value.shape();
        if ws.len() != 2 || ws[0] % 4 != 0 || ws[1] != input_dim {
            return Err(Error::shape(
                "lstm",
                format!("w_ih {:?} for input dim {}", ws, input_dim),
            ));
        }
        let hidden = ws[0] / 4;
        let hs = self.nodes[w_hh].value.shape();
        if hs != [4 * hidden, hidden] {
            return Err(Error::shape(
                "lstm",
                format!("w_hh {:?}, expected [{}, {}]", hs, 4 * hidden, hidden),
            ));
        }
        if self.nodes[b].value.numel() != 4 * hidden {
            return Err(Error::shape(
                "lstm",
                format!("bias needs {} values", 4 * hidden),
            ));
        }
        let (h, cache) = kernels::lstm_forward(
            self.nodes[x].value.values(),
            self.nodes[w_ih].value.values(),
            self.nodes[w_hh].value.values(),
            self.nodes[b].value.values(),
            steps,
            input_dim,
            hidden,
        );
        let value = Tensor::new(vec![hidden], h)?;
        let rg = self.any_grad(&[x, w_ih, w_hh, b]);
        Ok(self.push(
            value,
            rg,
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                cache: Box::new(cache),
            },
        ))
    }

    /// Reverse sweep from a scalar loss. Gradients of nodes feeding several
    /// consumers accumulate; nodes that do not require gradients are skipped.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        if !self.nodes[loss].requires_grad {
            return Err(Error::Contract(
                "loss does not depend on any gradient-requiring leaf".to_string(),
            ));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss] = Some(vec![1.0]);
        for id in (0..=loss).rev() {
            let g = match self.grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_backward(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn apply_backward(&mut self, id: NodeId, g: &[f64]) {
        // Split borrows: node values are read-only, gradient slots are
        // written. `nodes` and `grads` are distinct fields.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let rg = |pid: NodeId| nodes[pid].requires_grad;
        fn buf<'a>(
            nodes: &[Node],
            grads: &'a mut Vec<Option<Vec<f64>>>,
            pid: NodeId,
        ) -> &'a mut [f64] {
            let len = nodes[pid].value.numel();
            grads[pid].get_or_insert_with(|| vec![0.0; len])
        }
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Reshape { x } => {
                if rg(*x) {
                    kernels::axpy(1.0, g, buf(nodes, grads, *x));
                }
            }
            Op::Conv1d { x, w, b, dims } => {
                let xv = nodes[*x].value.values();
                let wv = nodes[*w].value.values();
                if rg(*b) {
                    kernels::conv1d_backward_b(g, dims, buf(nodes, grads, *b));
                }
                if rg(*w) {
                    kernels::conv1d_backward_w(g, xv, dims, buf(nodes, grads, *w));
                }
                if rg(*x) {
                    kernels::conv1d_backward_x(g, wv, dims, buf(nodes, grads, *x));
                }
            }
            Op::BatchNorm1d {
                x,
                gamma,
                beta,
                mode,
                xhat,
                invstd,
            } => {
                let c = invstd.len();
                let len = xhat.len() / c;
                let gv = nodes[*gamma].value.values();
                if rg(*beta) {
                    let db = buf(nodes, grads, *beta);
                    for ch in 0..c {
                        db[ch] += g[ch * len..(ch + 1) * len].iter().sum::<f64>();
                    }
                }
                if rg(*gamma) {
                    let dg = buf(nodes, grads, *gamma);
                    for ch in 0..c {
                        dg[ch] += kernels::dot(
                            &g[ch * len..(ch + 1) * len],
                            &xhat[ch * len..(ch + 1) * len],
                        );
                    }
                }
                if rg(*x) {
                    let dx = buf(nodes, grads, *x);
                    match mode {
                        BnMode::Eval => {
                            for ch in 0..c {
                                let scale = gv[ch] * invstd[ch];
                                kernels::axpy(
                                    scale,
                                    &g[ch * len..(ch + 1) * len],
                                    &mut dx[ch * len..(ch + 1) * len],
                                );
                            }
                        }
                        BnMode::Train => {
                            let n = len as f64;
                            for ch in 0..c {
                                let grow = &g[ch * len..(ch + 1) * len];
                                let hrow = &xhat[ch * len..(ch + 1) * len];
                                let sum_g: f64 = grow.iter().sum();
                                let sum_gh = kernels::dot(grow, hrow);
                                let scale = gv[ch] * invstd[ch] / n;
                                let drow = &mut dx[ch * len..(ch + 1) * len];
                                for l in 0..len {
                                    drow[l] += scale * (n * grow[l] - sum_g - hrow[l] * sum_gh);
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if rg(*x) {
                    let xv = nodes[*x].value.values();
                    let dx = buf(nodes, grads, *x);
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            dx[i] += g[i];
                        }
                    }
                }
            }
            Op::MaxPool1d { x, argmax } => {
                if rg(*x) {
                    let dx = buf(nodes, grads, *x);
                    for (o, src) in argmax.iter().enumerate() {
                        dx[*src] += g[o];
                    }
                }
            }
            Op::Gap { x } => {
                if rg(*x) {
                    let len = nodes[*x].value.shape()[1];
                    let dx = buf(nodes, grads, *x);
                    for (ch, gc) in g.iter().enumerate() {
                        let share = gc / len as f64;
                        for l in 0..len {
                            dx[ch * len + l] += share;
                        }
                    }
                }
            }
            Op::Dense { x, w, b } => {
                let in_dim = nodes[*x].value.numel();
                let xv = nodes[*x].value.values();
                let wv = nodes[*w].value.values();
                if rg(*b) {
                    kernels::axpy(1.0, g, buf(nodes, grads, *b));
                }
                if rg(*w) {
                    let dw = buf(nodes, grads, *w);
                    for (r, gr) in g.iter().enumerate() {
                        kernels::axpy(*gr, xv, &mut dw[r * in_dim..(r + 1) * in_dim]);
                    }
                }
                if rg(*x) {
                    let dx = buf(nodes, grads, *x);
                    for (r, gr) in g.iter().enumerate() {
                        kernels::axpy(*gr, &wv[r * in_dim..(r + 1) * in_dim], dx);
                    }
                }
            }
            Op::Concat { a, b } => {
                let na = nodes[*a].value.numel();
                if rg(*a) {
                    kernels::axpy(1.0, &g[..na], buf(nodes, grads, *a));
                }
                if rg(*b) {
                    kernels::axpy(1.0, &g[na..], buf(nodes, grads, *b));
                }
            }
            Op::Add { a, b } => {
                if rg(*a) {
                    kernels::axpy(1.0, g, buf(nodes, grads, *a));
                }
                if rg(*b) {
                    kernels::axpy(1.0, g, buf(nodes, grads, *b));
                }
            }
            Op::ElemMul { a, b } => {
                if rg(*a) {
                    let bv = nodes[*b].value.values();
                    let da = buf(nodes, grads, *a);
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if rg(*b) {
                    let av = nodes[*a].value.values();
                    let db = buf(nodes, grads, *b);
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::Affine { x, mul } => {
                if rg(*x) {
                    kernels::axpy(*mul, g, buf(nodes, grads, *x));
                }
            }
            Op::Sum { x } => {
                if rg(*x) {
                    let dx = buf(nodes, grads, *x);
                    for v in dx.iter_mut() {
                        *v += g[0];
                    }
                }
            }
            Op::AbsSum { x } => {
                if rg(*x) {
                    let xv = nodes[*x].value.values();
                    let dx = buf(nodes, grads, *x);
                    for i in 0..xv.len() {
                        dx[i] += g[0] * sign(xv[i]);
                    }
                }
            }
            Op::TotalVariation { x } => {
                if rg(*x) {
                    let xv = nodes[*x].value.values();
                    let dx = buf(nodes, grads, *x);
                    for t in 0..xv.len().saturating_sub(1) {
                        let s = sign(xv[t + 1] - xv[t]);
                        dx[t + 1] += g[0] * s;
                        dx[t] -= g[0] * s;
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                if rg(*logits) {
                    let dz = buf(nodes, grads, *logits);
                    for (j, p) in probs.iter().enumerate() {
                        let delta = if j == *label { 1.0 } else { 0.0 };
                        dz[j] += g[0] * (p - delta);
                    }
                }
            }
            Op::SoftmaxProb {
                logits,
                class,
                probs,
            } => {
                if rg(*logits) {
                    let pc = probs[*class];
                    let dz = buf(nodes, grads, *logits);
                    for (j, p) in probs.iter().enumerate() {
                        let delta = if j == *class { 1.0 } else { 0.0 };
                        dz[j] += g[0] * pc * (delta - p);
                    }
                }
            }
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                cache,
            } => {
                let xv = nodes[*x].value.values();
                let wihv = nodes[*w_ih].value.values();
                let whhv = nodes[*w_hh].value.values();
                let (need_x, need_wih, need_whh, need_b) = (rg(*x), rg(*w_ih), rg(*w_hh), rg(*b));
                // Materialize each needed buffer up front; split them out of
                // the grads vec one at a time to satisfy the borrow checker.
                for (need, pid) in [
                    (need_x, *x),
                    (need_wih, *w_ih),
                    (need_whh, *w_hh),
                    (need_b, *b),
                ] {
                    if need {
                        let _ = buf(nodes, grads, pid);
                    }
                }
                let mut dx = if need_x { grads[*x].take() } else { None };
                let mut dwih = if need_wih { grads[*w_ih].take() } else { None };
                let mut dwhh = if need_whh { grads[*w_hh].take() } else { None };
                let mut db = if need_b { grads[*b].take() } else { None };
                kernels::lstm_backward(
                    g,
                    xv,
                    wihv,
                    whhv,
                    cache,
                    dx.as_deref_mut(),
                    dwih.as_deref_mut(),
                    dwhh.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if need_x {
                    grads[*x] = dx;
                }
                if need_wih {
                    grads[*w_ih] = dwih;
                }
                if need_whh {
                    grads[*w_hh] = dwhh;
                }
                if need_b {
                    grads[*b] = db;
                }
            }
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
