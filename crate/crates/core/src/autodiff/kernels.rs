//! Numeric kernels behind the tape operations.
//!
//! Forward functions compute output buffers; backward functions accumulate
//! into caller-provided gradient buffers. Everything is plain `f64` slice
//! arithmetic over row-major layouts so the hot loops stay contiguous.

/// Geometry of one 1-D convolution, fixed at record time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl ConvDims {
    /// Clipped kernel range for output position `o`, returning
    /// `(k_lo, k_hi, x_start)` with `x_start` the input index of `k_lo`.
    #[inline]
    fn window(&self, o: usize) -> (usize, usize, usize) {
        let start = (o * self.stride) as isize - self.pad_left as isize;
        let k_lo = if start < 0 { (-start) as usize } else { 0 };
        let k_hi = self.kernel.min((self.len as isize - start).max(0) as usize);
        ((k_lo), (k_hi), (start + k_lo as isize) as usize)
    }
}

/// Cross-correlation: out[co][o] = b[co] + sum_ci sum_k w[co][ci][k] * x[ci][o*s - pad + k].
pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], b: &[f64], d: &ConvDims) -> Vec<f64> {
    let mut out = vec![0.0; d.c_out * d.out_len];
    for co in 0..d.c_out {
        let orow = &mut out[co * d.out_len..(co + 1) * d.out_len];
        for o in 0..d.out_len {
            let (k_lo, k_hi, x_start) = d.window(o);
            let mut acc = b[co];
            if k_lo < k_hi {
                let span = k_hi - k_lo;
                for ci in 0..d.c_in {
                    let xrow = &x[ci * d.len + x_start..ci * d.len + x_start + span];
                    let wrow = &w[(co * d.c_in + ci) * d.kernel + k_lo
                        ..(co * d.c_in + ci) * d.kernel + k_hi];
                    acc += dot(wrow, xrow);
                }
            }
            orow[o] = acc;
        }
    }
    out
}

pub(crate) fn conv1d_backward_x(g: &[f64], w: &[f64], d: &ConvDims, dx: &mut [f64]) {
    for co in 0..d.c_out {
        for o in 0..d.out_len {
            let gv = g[co * d.out_len + o];
            if gv == 0.0 {
                continue;
            }
            let (k_lo, k_hi, x_start) = d.window(o);
            if k_lo >= k_hi {
                continue;
            }
            let span = k_hi - k_lo;
            for ci in 0..d.c_in {
                let wrow = &w[(co * d.c_in + ci) * d.kernel + k_lo
                    ..(co * d.c_in + ci) * d.kernel + k_hi];
                let drow = &mut dx[ci * d.len + x_start..ci * d.len + x_start + span];
                axpy(gv, wrow, drow);
            }
        }
    }
}

pub(crate) fn conv1d_backward_w(g: &[f64], x: &[f64], d: &ConvDims, dw: &mut [f64]) {
    for co in 0..d.c_out {
        for o in 0..d.out_len {
            let gv = g[co * d.out_len + o];
            if gv == 0.0 {
                continue;
            }
            let (k_lo, k_hi, x_start) = d.window(o);
            if k_lo >= k_hi {
                continue;
            }
            let span = k_hi - k_lo;
            for ci in 0..d.c_in {
                let xrow = &x[ci * d.len + x_start..ci * d.len + x_start + span];
                let drow = &mut dw[(co * d.c_in + ci) * d.kernel + k_lo
                    ..(co * d.c_in + ci) * d.kernel + k_hi];
                axpy(gv, xrow, drow);
            }
        }
    }
}

pub(crate) fn conv1d_backward_b(g: &[f64], d: &ConvDims, db: &mut [f64]) {
    for co in 0..d.c_out {
        db[co] += g[co * d.out_len..(co + 1) * d.out_len].iter().sum::<f64>();
    }
}

/// Per-step activations saved by the LSTM forward for backpropagation
/// through time. All vectors have length `hidden`.
#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden_prev: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub steps: Vec<LstmStep>,
    pub input_dim: usize,
    pub hidden: usize,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Many-to-one LSTM over `x: [steps, input_dim]`. Gate weight rows are laid
/// out `[input; forget; candidate; output]`, each block `hidden` rows.
/// Returns the final hidden state and the cache for BPTT.
pub(crate) fn lstm_forward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
    steps: usize,
    input_dim: usize,
    hidden: usize,
) -> (Vec<f64>, LstmCache) {
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut cache = LstmCache {
        steps: Vec::with_capacity(steps),
        input_dim,
        hidden,
    };
    let gates = 4 * hidden;
    let mut pre = vec![0.0; gates];
    for t in 0..steps {
        let xt = &x[t * input_dim..(t + 1) * input_dim];
        for r in 0..gates {
            pre[r] = bias[r]
                + dot(&w_ih[r * input_dim..(r + 1) * input_dim], xt)
                + dot(&w_hh[r * hidden..(r + 1) * hidden], &h);
        }
        let mut step = LstmStep {
            gate_i: vec![0.0; hidden],
            gate_f: vec![0.0; hidden],
            gate_g: vec![0.0; hidden],
            gate_o: vec![0.0; hidden],
            cell: vec![0.0; hidden],
            cell_prev: c.clone(),
            tanh_cell: vec![0.0; hidden],
            hidden_prev: h.clone(),
        };
        for j in 0..hidden {
            let gi = sigmoid(pre[j]);
            let gf = sigmoid(pre[hidden + j]);
            let gg = pre[2 * hidden + j].tanh();
            let go = sigmoid(pre[3 * hidden + j]);
            let cj = gf * c[j] + gi * gg;
            let tc = cj.tanh();
            step.gate_i[j] = gi;
            step.gate_f[j] = gf;
            step.gate_g[j] = gg;
            step.gate_o[j] = go;
            step.cell[j] = cj;
            step.tanh_cell[j] = tc;
            c[j] = cj;
            h[j] = go * tc;
        }
        cache.steps.push(step);
    }
    (h, cache)
}

/// BPTT from the gradient of the final hidden state. Accumulates into the
/// provided buffers; any of them may be `None` when that operand does not
/// require a gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    g_h_final: &[f64],
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    cache: &LstmCache,
    mut dx: Option<&mut [f64]>,
    mut dw_ih: Option<&mut [f64]>,
    mut dw_hh: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let hidden = cache.hidden;
    let input_dim = cache.input_dim;
    let mut dh = g_h_final.to_vec();
    let mut dc = vec![0.0; hidden];
    let mut da = vec![0.0; 4 * hidden];
    for (t, step) in cache.steps.iter().enumerate().rev() {
        let xt = &x[t * input_dim..(t + 1) * input_dim];
        for j in 0..hidden {
            let (gi, gf, gg, go) = (step.gate_i[j], step.gate_f[j], step.gate_g[j], step.gate_o[j]);
            let tc = step.tanh_cell[j];
            let dcj = dc[j] + dh[j] * go * (1.0 - tc * tc);
            da[j] = dcj * gg * gi * (1.0 - gi);
            da[hidden + j] = dcj * step.cell_prev[j] * gf * (1.0 - gf);
            da[2 * hidden + j] = dcj * gi * (1.0 - gg * gg);
            da[3 * hidden + j] = dh[j] * tc * go * (1.0 - go);
            dc[j] = dcj * gf;
        }
        if let Some(db) = db.as_deref_mut() {
            for r in 0..4 * hidden {
                db[r] += da[r];
            }
        }
        if let Some(dw) = dw_ih.as_deref_mut() {
            for r in 0..4 * hidden {
                axpy(da[r], xt, &mut dw[r * input_dim..(r + 1) * input_dim]);
            }
        }
        if let Some(dw) = dw_hh.as_deref_mut() {
            for r in 0..4 * hidden {
                axpy(da[r], &step.hidden_prev, &mut dw[r * hidden..(r + 1) * hidden]);
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxt = &mut dx[t * input_dim..(t + 1) * input_dim];
            for r in 0..4 * hidden {
                axpy(da[r], &w_ih[r * input_dim..(r + 1) * input_dim], dxt);
            }
        }
        // dh for step t-1 flows only through the gate pre-activations
        for j in 0..hidden {
            dh[j] = 0.0;
        }
        for r in 0..4 * hidden {
            axpy(da[r], &w_hh[r * hidden..(r + 1) * hidden], &mut dh);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
