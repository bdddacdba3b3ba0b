//! AdamW optimizer over ndarray parameter tensors.
//!
//! The regularizers live inside the losses (`lambda * sum(theta^2)` terms),
//! so the optimizer runs with zero decoupled weight decay; gradients it sees
//! already include the L2 pull. Moments serialize with the owning model:
//! resuming a run must continue the exact trajectory, and the moments are
//! part of that state.

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl AdamW {
    pub fn new(lr: f64) -> AdamW {
        AdamW { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update over (parameter, gradient) pairs.
    ///
    /// The pair order must stay fixed across calls; moments are keyed by
    /// position and allocated lazily on first use.
    pub fn step(&mut self, pairs: Vec<(ArrayViewMutD<f64>, ArrayViewD<f64>)>) {
        if self.m.is_empty() {
            for (p, _) in &pairs {
                self.m.push(ArrayD::zeros(p.raw_dim()));
                self.v.push(ArrayD::zeros(p.raw_dim()));
            }
        }
        assert_eq!(pairs.len(), self.m.len(), "parameter list changed shape");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (mut p, g)) in pairs.into_iter().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut *m).and(&g).for_each(|m, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(&g).for_each(|v, &g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            ndarray::Zip::from(&mut p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }
}
