use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::tensor::{Scalar, Tensor};
use crate::error::{ensure, Error, Result};

/// Gradients keyed by parameter name.
pub type GradMap<T = f32> = BTreeMap<String, Tensor<T>>;

/// SGD-with-momentum state: one velocity buffer per parameter name.
#[derive(Clone, Debug)]
pub struct OptimizerState<T: Scalar = f32> {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self { momentum, weight_decay, buffers: BTreeMap::new() }
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buffers.get(name)
    }
}

impl<T: Scalar> Default for OptimizerState<T> {
    /// Momentum 0.9, weight decay 5e-4.
    fn default() -> Self {
        Self::new(0.9, 5e-4)
    }
}

/// One SGD step with momentum and decoupled-free (L2) weight decay:
/// `v ← μ·v + (g + λ·p)`, `p ← p − lr·v`. Decay applies to every
/// parameter, biases included.
pub fn sgd_step<'a, T, I>(params: I, grads: &GradMap<T>, state: &mut OptimizerState<T>, lr: f64) -> Result<()>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
{
    let params: Vec<_> = params.into_iter().collect();
    for (name, p) in &params {
        let g = grads
            .get(*name)
            .ok_or_else(|| Error::invalid(format!("missing gradient for parameter {name}")))?;
        ensure!(g.shape() == p.shape(), "gradient shape mismatch for {name}");
    }
    let (mu, wd, lr) = (T::of(state.momentum), T::of(state.weight_decay), T::of(lr));
    for (name, p) in params {
        let g = &grads[name];
        let v = state
            .buffers
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        ensure!(v.shape() == p.shape(), "momentum buffer shape mismatch for {name}");
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mu * *vv + (gv + wd * *pv);
            *pv = *pv - lr * *vv;
        }
    }
    Ok(())
}

/// Cosine annealing from `lr_start` at epoch 0 to `lr_end` at
/// `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_start: f64, lr_end: f64) -> Result<f64> {
    ensure!(total_epochs > 0, "total_epochs must be positive");
    ensure!(epoch <= total_epochs, "epoch {epoch} beyond total {total_epochs}");
    if epoch == 0 {
        return Ok(lr_start);
    }
    if epoch == total_epochs {
        return Ok(lr_end);
    }
    let t = epoch as f64 / total_epochs as f64;
    Ok(lr_end + 0.5 * (lr_start - lr_end) * (1.0 + (PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f64) -> (String, Tensor<f64>) {
        (name.to_string(), Tensor::scalar(v))
    }

    #[test]
    fn momentum_step_by_hand() {
        let (name, mut p) = one("w", 1.0);
        let grads: GradMap<f64> = [one("w", 1.0)].into_iter().collect();
        let mut st = OptimizerState::new(0.9, 0.0);
        sgd_step([(name.as_str(), &mut p)], &grads, &mut st, 0.1).unwrap();
        assert!((p.item() - 0.9).abs() < 1e-12);
        assert!((st.buffer("w").unwrap().item() - 1.0).abs() < 1e-12);
        // second step: v = 0.9*1 + 1 = 1.9, p = 0.9 - 0.19
        sgd_step([(name.as_str(), &mut p)], &grads, &mut st, 0.1).unwrap();
        assert!((p.item() - 0.71).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_only() {
        let (name, mut p) = one("w", 1.0);
        let grads: GradMap<f64> = [one("w", 0.0)].into_iter().collect();
        let mut st = OptimizerState::new(0.9, 5e-4);
        sgd_step([(name.as_str(), &mut p)], &grads, &mut st, 1.0).unwrap();
        assert!((p.item() - (1.0 - 5e-4)).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_still_updates_buffers() {
        let (name, mut p) = one("w", 2.0);
        let grads: GradMap<f64> = [one("w", 3.0)].into_iter().collect();
        let mut st = OptimizerState::new(0.9, 0.0);
        sgd_step([(name.as_str(), &mut p)], &grads, &mut st, 0.0).unwrap();
        assert_eq!(p.item(), 2.0);
        assert_eq!(st.buffer("w").unwrap().item(), 3.0);
    }

    #[test]
    fn missing_gradient() {
        let (name, mut p) = one("w", 2.0);
        let grads: GradMap<f64> = GradMap::new();
        let mut st = OptimizerState::default();
        assert!(sgd_step([(name.as_str(), &mut p)], &grads, &mut st, 0.1).is_err());
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 200, 1e-3, 1e-6).unwrap(), 1e-3);
        assert_eq!(cosine_lr(200, 200, 1e-3, 1e-6).unwrap(), 1e-6);
        let mid = cosine_lr(100, 200, 1e-3, 1e-6).unwrap();
        assert!((mid - 5.005e-4).abs() < 1e-15);
        assert!(cosine_lr(0, 0, 1e-3, 1e-6).is_err());
        assert!(cosine_lr(201, 200, 1e-3, 1e-6).is_err());
    }
}
