//! Shared neural-net primitives: LeakyReLU, stable softmax losses, and an
//! affine layer that carries its own gradient buffers.
//!
//! Everything runs in f64; the gradient-check suite compares analytic
//! gradients against central finite differences at 1e-4 relative error, and
//! f32 would not leave enough headroom for that.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Negative slope used by every activation in the pipeline.
pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_prime(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|v| v - lse)
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

/// Cross-entropy `-log p[target]`.
pub fn cross_entropy(logits: &Array1<f64>, target: usize) -> f64 {
    -log_softmax(logits)[target]
}

/// `KL(reference || predicted)` with predicted given as logits.
/// Zero reference entries contribute zero (0 * ln 0 convention).
pub fn kl_to_logits(reference: &Array1<f64>, logits: &Array1<f64>) -> f64 {
    let logp = log_softmax(logits);
    reference
        .iter()
        .zip(logp.iter())
        .map(|(&r, &lp)| if r > 0.0 { r * (r.ln() - lp) } else { 0.0 })
        .sum()
}

/// Affine map `y = W x + b` with gradient buffers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Affine {
    pub w: Array2<f64>, // out x in
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
}

impl Affine {
    /// Xavier-uniform initialization.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Affine {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-bound..bound));
        Affine {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn zeroed(in_dim: usize, out_dim: usize) -> Affine {
        Affine {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn apply_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Row-wise application: `Y = X W^T + b`.
    pub fn apply_mat(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    /// Accumulates `dy (x)^T` into the weight gradient and `dy` into the
    /// bias gradient; returns `W^T dy` for the upstream pass.
    pub fn backward_vec(&mut self, x: &Array1<f64>, dy: &Array1<f64>) -> Array1<f64> {
        self.gw += &dy
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&x.view().insert_axis(ndarray::Axis(0)));
        self.gb += dy;
        self.w.t().dot(dy)
    }

    /// Matrix form of [`Affine::backward_vec`]: rows are examples.
    pub fn backward_mat(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.gw += &dy.t().dot(x);
        self.gb += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.w)
    }

    pub fn sum_squares(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>() + self.b.iter().map(|v| v * v).sum::<f64>()
    }

    /// Adds `2 lambda theta` to the gradients (L2 term of the losses).
    pub fn add_l2_grad(&mut self, lambda: f64) {
        ndarray::Zip::from(&mut self.gw).and(&self.w).for_each(|g, &w| *g += 2.0 * lambda * w);
        ndarray::Zip::from(&mut self.gb).and(&self.b).for_each(|g, &b| *g += 2.0 * lambda * b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr1;

    #[test]
    fn leaky_matches_hand_values() {
        assert_eq!(leaky(1.0), 1.0);
        assert_eq!(leaky(-1.0), -0.01);
        assert_eq!(leaky(0.0), 0.0);
    }

    #[test]
    fn uniform_logits_give_ln2_cross_entropy() {
        let logits = arr1(&[0.0, 0.0]);
        assert_relative_eq!(cross_entropy(&logits, 0), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(cross_entropy(&logits, 1), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn softmax_of_shifted_logits_is_invariant() {
        let a = softmax(&arr1(&[2.0, -1.0]));
        let b = softmax(&arr1(&[1002.0, 999.0]));
        assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
        assert_relative_eq!(a[1], b[1], epsilon = 1e-12);
    }

    #[test]
    fn kl_is_zero_iff_equal() {
        let logits = arr1(&[0.7, -0.3]);
        let p = softmax(&logits);
        assert!(kl_to_logits(&p, &logits).abs() < 1e-12);
        let q = arr1(&[0.9, 0.1]);
        assert!(kl_to_logits(&q, &logits) > 0.0);
    }

    #[test]
    fn affine_vec_and_mat_paths_agree() {
        let mut rng = crate::rng::stream(3, "test", 0);
        let layer = Affine::new(4, 3, &mut rng);
        let x = arr1(&[0.5, -1.0, 2.0, 0.25]);
        let vec_out = layer.apply_vec(&x);
        let mat_out = layer.apply_mat(&x.clone().insert_axis(ndarray::Axis(0)).to_owned());
        for j in 0..3 {
            assert_relative_eq!(vec_out[j], mat_out[[0, j]], epsilon = 1e-12);
        }
    }
}
