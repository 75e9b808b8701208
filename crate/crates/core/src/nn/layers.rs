//! Dense and batch-normalization layers with hand-derived gradients.
//!
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Fully connected layer `y = x W + b` with `W` of shape `(input, output)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform init with bound `sqrt(6 / (input + output))`; zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let weight =
            Array2::from_shape_simple_fn((input, output), || rng::uniform(rng, -bound, bound));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Returns `(dW, db, dx)`; `dx` is skipped when `need_input_grad` is false.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        need_input_grad: bool,
    ) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
        let dw = x.t().dot(&dy);
        let db = dy.sum_axis(Axis(0));
        let dx = need_input_grad.then(|| dy.dot(&self.weight.t()));
        (dw, db, dx)
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch normalization over the batch axis with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub epsilon: f64,
    /// Weight of the old running statistic in each update.
    pub momentum: f64,
}

/// Values kept from a training-mode pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNormSpec {
    pub dim: usize,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self::from_spec(BatchNormSpec {
            dim,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        })
    }

    pub fn from_spec(spec: BatchNormSpec) -> Self {
        Self {
            scale: Array1::ones(spec.dim),
            shift: Array1::zeros(spec.dim),
            running_mean: Array1::zeros(spec.dim),
            running_var: Array1::ones(spec.dim),
            epsilon: spec.epsilon,
            momentum: spec.momentum,
        }
    }

    pub fn spec(&self) -> BatchNormSpec {
        BatchNormSpec {
            dim: self.dim(),
            epsilon: self.epsilon,
            momentum: self.momentum,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Normalizes with the batch's own (biased) statistics.
    pub fn forward_train(&self, x: ArrayView2<f64>) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let normalized = centered * &inv_std;
        let y = &normalized * &self.scale + &self.shift;
        (
            y,
            BatchNormCache {
                normalized,
                inv_std,
                mean,
                var,
            },
        )
    }

    /// Normalizes with the running statistics.
    pub fn forward_infer(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let gain = &inv_std * &self.scale;
        let offset = &self.shift - &(&self.running_mean * &gain);
        &x * &gain + &offset
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let m = self.momentum;
        self.running_mean
            .zip_mut_with(&cache.mean, |r, &b| *r = m * *r + (1.0 - m) * b);
        self.running_var
            .zip_mut_with(&cache.var, |r, &b| *r = m * *r + (1.0 - m) * b);
    }

    /// Returns `(d scale, d shift, dx)` for a training-mode pass.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dy: ArrayView2<f64>,
        need_input_grad: bool,
    ) -> (Array1<f64>, Array1<f64>, Option<Array2<f64>>) {
        let dshift = dy.sum_axis(Axis(0));
        let dscale = (&dy * &cache.normalized).sum_axis(Axis(0));
        let dx = need_input_grad.then(|| {
            let n = dy.nrows() as f64;
            // dx = scale * inv_std / n * (n dy - sum(dy) - x_hat * sum(dy * x_hat))
            let coef = &self.scale * &cache.inv_std / n;
            let mut dx = &dy * n - &dshift;
            dx -= &(&cache.normalized * &dscale);
            dx * &coef
        });
        (dscale, dshift, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_forward_is_affine() {
        let d = Dense {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.5, -0.5],
        };
        let y = d.forward(array![[1.0, 0.0, -1.0]].view());
        assert_eq!(y, array![[-3.5, -4.5]]);
    }

    #[test]
    fn dense_init_bound() {
        let mut r = rng::rng_from_seed(3);
        let d = Dense::init(129, 256, &mut r);
        let bound = (6.0f64 / 385.0).sqrt();
        assert!(d.weight.iter().all(|w| w.abs() <= bound));
        assert!(d.bias.iter().all(|&b| b == 0.0));
        assert_eq!(d.weight.len() + d.bias.len(), 129 * 256 + 256);
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let bn = BatchNorm::new(2);
        let x = array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [6.0, 0.0]];
        let (y, _) = bn.forward_train(x.view());
        for col in y.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
            let var = col.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn fresh_batchnorm_infer_is_near_identity() {
        let bn = BatchNorm::new(3);
        let x = array![[1.0, -2.0, 0.5]];
        let y = bn.forward_infer(x.view());
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b / (1.0 + BN_EPSILON).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn running_stats_converge_to_data_statistics() {
        let mut bn = BatchNorm::new(2);
        let mut r = rng::rng_from_seed(8);
        for _ in 0..2000 {
            let x = Array2::from_shape_simple_fn((64, 2), || 0.0);
            let x = x.mapv(|_| rng::uniform(&mut r, 0.0, 1.0));
            let x = &x * &array![3.0, 0.5] + &array![2.0, -1.0];
            let (_, cache) = bn.forward_train(x.view());
            bn.update_running(&cache);
        }
        // uniform(a, a + w): mean a + w/2, var w^2/12; the batch variance is biased by (n-1)/n.
        let expect_mean = [3.5, -0.75];
        let expect_var = [9.0 / 12.0 * 63.0 / 64.0, 0.25 / 12.0 * 63.0 / 64.0];
        for i in 0..2 {
            assert!((bn.running_mean[i] / expect_mean[i] - 1.0).abs() < 0.05);
            assert!((bn.running_var[i] / expect_var[i] - 1.0).abs() < 0.05);
        }
    }
}
