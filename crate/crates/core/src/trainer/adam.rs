use crate::error::{JanusError, Result};
use crate::tensor::Tensor;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Updates every parameter from its accumulated gradient. Parameters
    /// without a gradient buffer see a zero gradient.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(JanusError::mismatch("Adam::step", self.m.len(), params.len()));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad().map(<[f64]>::to_vec);
            let data = p.data_mut();
            for i in 0..data.len() {
                let gi = g.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
