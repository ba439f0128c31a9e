//! Central finite-difference verification of tape gradients.
//!
//! This is the independent oracle the whole engine is validated against:
//! it re-evaluates the forward closure at perturbed inputs and never touches
//! the backward code path.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::Result;

/// Default perturbation used by the test suites.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Compares tape gradients against central finite differences for every
/// coordinate of every input, returning the worst error.
///
/// The error is relative for gradient magnitudes above 1e-3 and absolute
/// below (a pure ratio is meaningless when the true derivative is zero).
/// `build` must construct the same computation each call from the given
/// leaves and return a scalar loss node.
pub fn max_gradient_error<F>(inputs: &[Tensor], eps: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let analytic = analytic_gradients(inputs, &mut build)?;
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let original = work[i].values()[j];
            work[i].values_mut()[j] = original + eps;
            let up = eval_loss(&work, &mut build)?;
            work[i].values_mut()[j] = original - eps;
            let down = eval_loss(&work, &mut build)?;
            work[i].values_mut()[j] = original;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i].values()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Gradients of the loss with respect to each input, via the tape.
pub fn analytic_gradients<F>(inputs: &[Tensor], build: &mut F) -> Result<Vec<Tensor>>
where
    F: FnMut(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect();
    let loss = build(&mut tape, &ids)?;
    tape.backward(loss)?;
    Ok(ids.iter().map(|id| tape.grad_tensor(*id)).collect())
}

fn eval_loss<F>(inputs: &[Tensor], build: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect();
    let loss = build(&mut tape, &ids)?;
    Ok(tape.value(loss).item())
}

/// Every differentiable operation family covered by [`per_op_gradient_error`].
pub const CHECKED_OPS: &[&str] = &[
    "conv1d",
    "batchnorm1d",
    "relu",
    "maxpool1d",
    "gap",
    "dense",
    "concat",
    "elementwise_mul",
    "softmax_cross_entropy",
    "softmax_prob",
    "lstm",
    "abs_sum",
    "total_variation",
];

/// Finite-difference check of one operation family on a seeded random
/// instance, returning the worst gradient error. Random draws avoid zero
/// crossings where the non-smooth ops (relu, abs, max) have no derivative.
pub fn per_op_gradient_error(op: &str, seed: u64) -> f64 {
    use crate::autodiff::{BnMode, Padding};
    use rand::SeedableRng;
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    match op {
        "conv1d" => {
            let x = Tensor::rand_uniform(vec![3, 8], -1.0, 1.0, &mut r);
            let w = Tensor::rand_uniform(vec![2, 3, 4], -0.7, 0.7, &mut r);
            let b = Tensor::rand_uniform(vec![2], -0.3, 0.3, &mut r);
            max_gradient_error(&[x, w, b], DEFAULT_EPS, |t, ids| {
                let y = t.conv1d(ids[0], ids[1], ids[2], 2, Padding::Same)?;
                Ok(t.sum(y))
            })
            .unwrap()
        }
        "batchnorm1d" => {
            let x = Tensor::rand_uniform(vec![2, 7], -2.0, 2.0, &mut r);
            let g = Tensor::rand_uniform(vec![2], 0.4, 1.6, &mut r);
            let bb = Tensor::rand_uniform(vec![2], -0.5, 0.5, &mut r);
            max_gradient_error(&[x, g, bb], DEFAULT_EPS, |t, ids| {
                let y = t.batchnorm1d(ids[0], ids[1], ids[2], BnMode::Train, None, 1e-5, 0)?;
                let w = t.constant(Tensor::new(
                    vec![2, 7],
                    (0..14).map(|i| (i as f64 * 0.37).cos()).collect(),
                )?);
                let p = t.elementwise_mul(y, w)?;
                Ok(t.sum(p))
            })
            .unwrap()
        }
        "relu" => {
            let x = Tensor::rand_uniform(vec![9], -1.0, 1.0, &mut r);
            max_gradient_error(&[x], DEFAULT_EPS, |t, ids| {
                let y = t.relu(ids[0]);
                let sq = t.elementwise_mul(y, y)?;
                Ok(t.sum(sq))
            })
            .unwrap()
        }
        "maxpool1d" => {
            let x = Tensor::rand_uniform(vec![2, 12], -1.0, 1.0, &mut r);
            max_gradient_error(&[x], DEFAULT_EPS, |t, ids| {
                let y = t.maxpool1d(ids[0], 3, 3)?;
                let w = t.constant(Tensor::new(
                    vec![2, 4],
                    (0..8).map(|i| 0.2 + i as f64 * 0.1).collect(),
                )?);
                let p = t.elementwise_mul(y, w)?;
                Ok(t.sum(p))
            })
            .unwrap()
        }
        "gap" => {
            let x = Tensor::rand_uniform(vec![4, 6], -1.0, 1.0, &mut r);
            max_gradient_error(&[x], DEFAULT_EPS, |t, ids| {
                let y = t.gap(ids[0])?;
                let sq = t.elementwise_mul(y, y)?;
                Ok(t.sum(sq))
            })
            .unwrap()
        }
        "dense" => {
            let x = Tensor::rand_uniform(vec![6], -1.0, 1.0, &mut r);
            let w = Tensor::rand_uniform(vec![4, 6], -0.8, 0.8, &mut r);
            let b = Tensor::rand_uniform(vec![4], -0.3, 0.3, &mut r);
            max_gradient_error(&[x, w, b], DEFAULT_EPS, |t, ids| {
                let y = t.dense(ids[0], ids[1], ids[2])?;
                t.softmax_cross_entropy(y, 2)
            })
            .unwrap()
        }
        "concat" => {
            let a = Tensor::rand_uniform(vec![5], -1.0, 1.0, &mut r);
            let b = Tensor::rand_uniform(vec![3], -1.0, 1.0, &mut r);
            max_gradient_error(&[a, b], DEFAULT_EPS, |t, ids| {
                let c = t.concat(ids[0], ids[1]);
                let sq = t.elementwise_mul(c, c)?;
                Ok(t.sum(sq))
            })
            .unwrap()
        }
        "elementwise_mul" => {
            let a = Tensor::rand_uniform(vec![7], -1.0, 1.0, &mut r);
            let b = Tensor::rand_uniform(vec![7], -1.0, 1.0, &mut r);
            max_gradient_error(&[a, b], DEFAULT_EPS, |t, ids| {
                let p = t.elementwise_mul(ids[0], ids[1])?;
                Ok(t.sum(p))
            })
            .unwrap()
        }
        "softmax_cross_entropy" => {
            let z = Tensor::rand_uniform(vec![8], -3.0, 3.0, &mut r);
            max_gradient_error(&[z], DEFAULT_EPS, |t, ids| {
                t.softmax_cross_entropy(ids[0], 5)
            })
            .unwrap()
        }
        "softmax_prob" => {
            let z = Tensor::rand_uniform(vec![8], -3.0, 3.0, &mut r);
            max_gradient_error(&[z], DEFAULT_EPS, |t, ids| t.softmax_prob(ids[0], 1)).unwrap()
        }
        "lstm" => {
            let x = Tensor::rand_uniform(vec![4, 3], -1.0, 1.0, &mut r);
            let w_ih = Tensor::rand_uniform(vec![8, 3], -0.6, 0.6, &mut r);
            let w_hh = Tensor::rand_uniform(vec![8, 2], -0.6, 0.6, &mut r);
            let b = Tensor::rand_uniform(vec![8], -0.4, 0.4, &mut r);
            max_gradient_error(&[x, w_ih, w_hh, b], DEFAULT_EPS, |t, ids| {
                let h = t.lstm(ids[0], ids[1], ids[2], ids[3])?;
                let sq = t.elementwise_mul(h, h)?;
                Ok(t.sum(sq))
            })
            .unwrap()
        }
        "abs_sum" => {
            let x = Tensor::rand_uniform(vec![9], 0.1, 1.0, &mut r);
            max_gradient_error(&[x], DEFAULT_EPS, |t, ids| Ok(t.abs_sum(ids[0]))).unwrap()
        }
        "total_variation" => {
            let x = Tensor::rand_uniform(vec![9], -1.0, 1.0, &mut r);
            max_gradient_error(&[x], DEFAULT_EPS, |t, ids| Ok(t.total_variation(ids[0])))
                .unwrap()
        }
        other => panic!("unknown op {other}"),
    }
}
