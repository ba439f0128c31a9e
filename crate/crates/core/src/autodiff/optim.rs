//! Parameter containers and gradient-descent updates.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of a model's trainable tensors. Order is the identity
/// used to align gradients, optimizer state, and checkpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.params.push(Param {
            name: name.into(),
            tensor,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.params[idx].tensor
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.all_finite())
    }
}

/// Classic momentum SGD: `v <- mu*v + g`, `theta <- theta - lr*v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. `grads` must align with `params` index-for-index.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(
                "sgd_momentum_step",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        if self.velocity.len() != params.len() {
            self.velocity = (0..params.len())
                .map(|i| vec![0.0; params.tensor(i).numel()])
                .collect();
        }
        for i in 0..params.len() {
            let g = grads[i].values();
            let theta = params.tensor_mut(i).values_mut();
            if g.len() != theta.len() {
                return Err(Error::shape(
                    "sgd_momentum_step",
                    format!("gradient {} has {} values, parameter has {}", i, g.len(), theta.len()),
                ));
            }
            let v = &mut self.velocity[i];
            for j in 0..theta.len() {
                v[j] = self.momentum * v[j] + g[j];
                theta[j] -= self.lr * v[j];
            }
        }
        Ok(())
    }
}

/// Plain gradient step without momentum, used by the mask optimizer.
pub fn gradient_descent_step(values: &mut [f64], grad: &[f64], lr: f64) {
    debug_assert_eq!(values.len(), grad.len());
    for (v, g) in values.iter_mut().zip(grad) {
        *v -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> (ParamSet, Vec<Tensor>) {
        let mut p = ParamSet::new();
        p.add("theta", Tensor::scalar(v));
        (p, vec![Tensor::scalar(1.0)])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, g) = single(0.0);
        let mut opt = SgdMomentum::new(0.005, 0.7);
        opt.step(&mut p, &g).unwrap();
        assert!((p.tensor(0).item() + 0.005).abs() < 1e-15);
    }

    #[test]
    fn two_steps_constant_gradient() {
        // v1 = 1, v2 = 0.7 + 1 = 1.7; total displacement lr*(1 + 1.7)
        let (mut p, g) = single(0.0);
        let mut opt = SgdMomentum::new(0.005, 0.7);
        opt.step(&mut p, &g).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert!((p.tensor(0).item() + 0.0135).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_decays_geometrically() {
        let (mut p, g) = single(0.0);
        let mut opt = SgdMomentum::new(0.1, 0.7);
        opt.step(&mut p, &g).unwrap();
        let mut prev_delta = -p.tensor(0).item();
        let zero = vec![Tensor::scalar(0.0)];
        let mut before = p.tensor(0).item();
        for _ in 0..5 {
            opt.step(&mut p, &zero).unwrap();
            let delta = before - p.tensor(0).item();
            assert!((delta / prev_delta - 0.7).abs() < 1e-12);
            prev_delta = delta;
            before = p.tensor(0).item();
        }
    }

    #[test]
    fn plain_step_examples() {
        let mut m = vec![0.0];
        gradient_descent_step(&mut m, &[1.0], 0.001);
        assert!((m[0] + 0.001).abs() < 1e-15);
        gradient_descent_step(&mut m, &[0.0], 0.001);
        assert!((m[0] + 0.001).abs() < 1e-15);
    }

    #[test]
    fn plain_step_contracts_quadratic_bowl() {
        // f(x) = 0.5 x^2, gradient x; step 0.1 scales distance by 0.9
        let mut x = vec![8.0];
        for _ in 0..50 {
            let g = [x[0]];
            gradient_descent_step(&mut x, &g, 0.1);
        }
        assert!(x[0].abs() < 8.0 * 0.9f64.powi(50) + 1e-12);
    }
}
