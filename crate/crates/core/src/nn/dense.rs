use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::NnError;
use crate::scalar::Scalar;

/// Fully connected layer `y = x W + b`, with `W` stored `[inputs, outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    /// Gradient with respect to the layer input, when requested.
    pub input: Option<Array2<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((inputs, outputs)), bias: Array1::zeros(outputs) }
    }

    /// Uniform fan-in initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
    pub fn init_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| T::lit((2.0 * rng.random::<f64>() - 1.0) * limit));
        Self { weight, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Result<Array2<T>, NnError> {
        if x.ncols() != self.inputs() {
            return Err(NnError::Shape { expected: self.inputs(), found: x.ncols() });
        }
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        Ok(y)
    }

    /// Exact gradients given the forward input `x` and upstream gradient `grad`.
    pub fn backward(&self, x: &ArrayView2<T>, grad: &ArrayView2<T>, want_input: bool) -> Result<DenseGrads<T>, NnError> {
        if grad.ncols() != self.outputs() || grad.nrows() != x.nrows() {
            return Err(NnError::Shape { expected: self.outputs(), found: grad.ncols() });
        }
        Ok(DenseGrads {
            weight: x.t().dot(grad).as_standard_layout().into_owned(),
            bias: grad.sum_axis(Axis(0)),
            input: want_input.then(|| grad.dot(&self.weight.t()).as_standard_layout().into_owned()),
        })
    }
}
