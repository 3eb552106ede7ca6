use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::NnError;
use crate::scalar::Scalar;

pub const BN_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization with learned scale and shift.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`,
/// using the biased batch variance so that they converge to exactly the
/// statistics train mode normalizes with.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub momentum: T,
    pub eps: T,
}

/// Values kept from a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub normalized: Array2<T>,
    pub inv_std: Array1<T>,
    /// True when `normalized` used batch statistics (train mode).
    pub batch_stats: bool,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T> {
    pub input: Array2<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize, momentum: T) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum,
            eps: T::lit(BN_EPSILON),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &ArrayView2<T>) -> Result<(), NnError> {
        if x.ncols() != self.width() {
            return Err(NnError::Shape { expected: self.width(), found: x.ncols() });
        }
        Ok(())
    }

    /// Normalizes with batch statistics and updates the running statistics.
    pub fn forward_train(&mut self, x: &ArrayView2<T>) -> Result<(Array2<T>, BnCache<T>), NnError> {
        self.check(x)?;
        let b = x.nrows();
        if b < 2 {
            return Err(NnError::DegenerateBatch(b));
        }
        let inv_b = T::one() / T::from_count(b);
        let mean = x.sum_axis(Axis(0)) * inv_b;
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) * inv_b;
        let inv_std = var.mapv(|v| T::one() / (v + self.eps).sqrt());
        let normalized = &centered * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;

        let keep = self.momentum;
        let take = T::one() - keep;
        self.running_mean = &self.running_mean * keep + &mean * take;
        self.running_var = &self.running_var * keep + &var * take;
        Ok((out, BnCache { normalized, inv_std, batch_stats: true }))
    }

    /// Replaces the running statistics with the batch statistics of `x`.
    pub fn freeze_stats(&mut self, x: &ArrayView2<T>) -> Result<(), NnError> {
        self.check(x)?;
        let b = x.nrows();
        if b < 2 {
            return Err(NnError::DegenerateBatch(b));
        }
        let inv_b = T::one() / T::from_count(b);
        let mean = x.sum_axis(Axis(0)) * inv_b;
        self.running_var = (x - &mean).mapv(|v| v * v).sum_axis(Axis(0)) * inv_b;
        self.running_mean = mean;
        Ok(())
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check(x)?;
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + self.eps).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        Ok(x * &scale + &shift)
    }

    /// Eval-mode forward that also keeps what the backward pass needs.
    pub fn forward_eval_cached(&self, x: &ArrayView2<T>) -> Result<(Array2<T>, BnCache<T>), NnError> {
        self.check(x)?;
        let inv_std = self.running_var.mapv(|v| T::one() / (v + self.eps).sqrt());
        let normalized = (x - &self.running_mean) * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        Ok((out, BnCache { normalized, inv_std, batch_stats: false }))
    }

    pub fn backward(&self, cache: &BnCache<T>, grad: &ArrayView2<T>) -> BnGrads<T> {
        let dbeta = grad.sum_axis(Axis(0));
        let dgamma = (grad * &cache.normalized).sum_axis(Axis(0));
        if !cache.batch_stats {
            let input = grad * &(&self.gamma * &cache.inv_std);
            return BnGrads { input, gamma: dgamma, beta: dbeta };
        }
        let b = T::from_count(grad.nrows());
        let dnorm = grad * &self.gamma;
        let sum_dnorm = dnorm.sum_axis(Axis(0));
        let sum_dnorm_norm = (&dnorm * &cache.normalized).sum_axis(Axis(0));
        let scale = &cache.inv_std / b;
        let input = (dnorm * b - &sum_dnorm - &(&cache.normalized * &sum_dnorm_norm)) * &scale;
        BnGrads { input, gamma: dgamma, beta: dbeta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((64, 5), |(_, j)| 3.0 * j as f64 + (1.0 + j as f64) * (rng.random::<f64>() - 0.5));
        let mut bn = BatchNorm::<f64>::new(5, 0.9);
        let (y, _) = bn.forward_train(&x.view()).unwrap();
        for col in y.axis_iter(Axis(1)) {
            let mean = col.sum() / 64.0;
            let var = col.mapv(|v| (v - mean) * (v - mean)).sum() / 64.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
    }

    #[test]
    fn eval_mode_identity_with_unit_stats() {
        let mut bn = BatchNorm::<f64>::new(3, 0.9);
        bn.eps = 0.0;
        let x = Array2::from_shape_fn((4, 3), |(i, j)| i as f64 - j as f64 * 0.5);
        assert_eq!(bn.forward_eval(&x.view()).unwrap(), x);
    }

    #[test]
    fn single_row_train_batch_rejected() {
        let mut bn = BatchNorm::<f32>::new(3, 0.9);
        let x = Array2::<f32>::zeros((1, 3));
        assert!(matches!(bn.forward_train(&x.view()), Err(NnError::DegenerateBatch(1))));
    }

    #[test]
    fn running_stats_converge_to_batch_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((512, 4), |(_, j)| 2.0 * j as f64 + rng.random::<f64>());
        let mut bn = BatchNorm::<f64>::new(4, 0.9);
        let mut train_out = Array2::zeros((0, 0));
        for _ in 0..400 {
            train_out = bn.forward_train(&x.view()).unwrap().0;
        }
        let eval_out = bn.forward_eval(&x.view()).unwrap();
        let worst = (&train_out - &eval_out).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-3, "{worst}");
        assert!(bn.running_var.iter().all(|&v| v >= 0.0));
    }
}
