//! Adam over an explicit parameter list.

use crate::autodiff::Tensor;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    params: Vec<Tensor<T>>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    /// β = (0.9, 0.999), ε = 1e-8. Moments are kept only for `params`.
    pub fn new(params: Vec<Tensor<T>>, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return invalid(format!("learning rate must be positive, got {lr}"));
        }
        if let Some(t) = params.iter().find(|t| !t.requires_grad()) {
            return invalid(format!("tensor {} with shape {:?} does not require grad", t.id(), t.shape()));
        }
        let m = params.iter().map(|t| vec![T::zero(); t.numel()]).collect();
        let v = params.iter().map(|t| vec![T::zero(); t.numel()]).collect();
        Ok(Self { params, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v })
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Scalars of optimizer state per moment, equal to the trainable count.
    pub fn state_len(&self) -> usize {
        self.m.iter().map(Vec::len).sum()
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Restores moments and the step counter from a checkpoint.
    pub fn restore(&mut self, step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<()> {
        let fits = |x: &[Vec<T>]| x.len() == self.params.len() && x.iter().zip(&self.params).all(|(a, p)| a.len() == p.numel());
        if !fits(&m) || !fits(&v) {
            return Err(Error::Format("optimizer moments do not match the parameter list".into()));
        }
        (self.step, self.m, self.v) = (step, m, v);
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(Tensor::zero_grad);
    }

    /// One update from the accumulated grads; parameters without a grad
    /// still advance their moments with a zero gradient.
    pub fn step(&mut self) {
        self.step += 1;
        let t = self.step as i32;
        let c = |x: f64| T::from_f64_lossy(x);
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let (one_b1, one_b2) = (c(1.0 - self.beta1), c(1.0 - self.beta2));
        let bias1 = c(1.0 - self.beta1.powi(t));
        let bias2 = c(1.0 - self.beta2.powi(t));
        let (lr, eps) = (c(self.lr), c(self.eps));
        for ((p, m), v) in self.params.iter().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]);
            let mut data = p.data_mut();
            for i in 0..grad.len() {
                m[i] = b1 * m[i] + one_b1 * grad[i];
                v[i] = b2 * v[i] + one_b2 * grad[i] * grad[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
