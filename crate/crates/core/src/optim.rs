//! First-order optimizers over a flat parameter vector with per-entry
//! learning rates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Gd,
    /// Adaptive moment estimation.
    #[default]
    Adam,
}

pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grads: &[f64]);
}

pub struct GradientDescent {
    lr: Vec<f64>,
}

impl GradientDescent {
    pub fn new(lr: Vec<f64>) -> Self {
        Self { lr }
    }
}

impl Optimizer for GradientDescent {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((x, g), lr) in params.iter_mut().zip(grads).zip(&self.lr) {
            *x -= lr * g;
        }
    }
}

pub struct Adam {
    lr: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: Vec<f64>) -> Self {
        let n = lr.len();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr[i] * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn build(kind: OptimizerKind, lr: Vec<f64>) -> Box<dyn Optimizer + Send> {
    match kind {
        OptimizerKind::Gd => Box::new(GradientDescent::new(lr)),
        OptimizerKind::Adam => Box::new(Adam::new(lr)),
    }
}
