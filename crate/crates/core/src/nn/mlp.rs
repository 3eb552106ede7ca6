use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batchnorm::{BatchNorm, BnCache};
use super::dense::Dense;
use super::NnError;
use crate::scalar::Scalar;

/// Hidden and output widths giving about 1.75 M parameters for a 1024-wide input.
pub const DEFAULT_HIDDEN: [usize; 5] = [1024, 512, 256, 128, 64];
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Dense network: every layer but the last is FC, BN, ReLU; the last is a bare FC.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub dense: Vec<Dense<T>>,
    pub norms: Vec<BatchNorm<T>>,
    pub mode: Mode,
    /// Optimizer updates applied so far.
    pub steps: u64,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input of each FC layer; `inputs[l + 1]` is the ReLU output of layer `l`.
    pub inputs: Vec<Array2<T>>,
    pub norms: Vec<BnCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub gammas: Vec<Array1<T>>,
    pub betas: Vec<Array1<T>>,
    pub input: Option<Array2<T>>,
}

/// Trainable parameters for the given width chain: FC weights and biases plus BN scale and shift.
pub fn param_count_for(widths: &[usize]) -> usize {
    let fc: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let bn: usize = widths[1..widths.len().saturating_sub(1)].iter().map(|w| 2 * w).sum();
    fc + bn
}

/// `[input, hidden.., output]`.
pub fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

fn check_widths(widths: &[usize]) -> Result<(), NnError> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(NnError::InvalidWidths(format!("{widths:?}")));
    }
    Ok(())
}

impl<T: Scalar> Mlp<T> {
    /// Seeded fan-in uniform initialization, BN at identity, train mode.
    pub fn new(widths: &[usize], momentum: f64, seed: u64) -> Result<Self, NnError> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense = widths.windows(2).map(|w| Dense::init_uniform(w[0], w[1], &mut rng)).collect();
        Ok(Self::assemble(widths, dense, momentum))
    }

    pub fn zeros(widths: &[usize], momentum: f64) -> Result<Self, NnError> {
        check_widths(widths)?;
        let dense = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self::assemble(widths, dense, momentum))
    }

    fn assemble(widths: &[usize], dense: Vec<Dense<T>>, momentum: f64) -> Self {
        let norms = widths[1..widths.len() - 1].iter().map(|&w| BatchNorm::new(w, T::lit(momentum))).collect();
        Self { dense, norms, mode: Mode::Train, steps: 0 }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.dense[0].inputs()];
        w.extend(self.dense.iter().map(Dense::outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.dense[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.dense[self.dense.len() - 1].outputs()
    }

    pub fn momentum(&self) -> f64 {
        self.norms.first().map_or(DEFAULT_BN_MOMENTUM, |n| n.momentum.wide())
    }

    pub fn param_count(&self) -> usize {
        self.dense.iter().map(Dense::param_count).sum::<usize>() + self.norms.iter().map(|n| 2 * n.width()).sum::<usize>()
    }

    /// Forward pass in the current mode. Train mode updates BN running statistics.
    pub fn forward(&mut self, x: &ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>), NnError> {
        let last = self.dense.len() - 1;
        let mut inputs = Vec::with_capacity(self.dense.len());
        let mut caches = Vec::with_capacity(self.norms.len());
        let mut h = x.to_owned();
        for l in 0..last {
            let z = self.dense[l].forward(&h.view())?;
            let (mut a, cache) = match self.mode {
                Mode::Train => self.norms[l].forward_train(&z.view())?,
                Mode::Eval => self.norms[l].forward_eval_cached(&z.view())?,
            };
            a.mapv_inplace(relu);
            caches.push(cache);
            inputs.push(std::mem::replace(&mut h, a));
        }
        let out = self.dense[last].forward(&h.view())?;
        inputs.push(h);
        Ok((out, MlpCache { inputs, norms: caches }))
    }

    /// Sets each BN layer's running statistics to those of `x` as it reaches
    /// that layer, so that eval mode reproduces a train-mode pass over `x`.
    pub fn recalibrate(&mut self, x: &ArrayView2<T>) -> Result<(), NnError> {
        let last = self.dense.len() - 1;
        let mut h = x.to_owned();
        for l in 0..last {
            let z = self.dense[l].forward(&h.view())?;
            self.norms[l].freeze_stats(&z.view())?;
            h = self.norms[l].forward_eval(&z.view())?;
            h.mapv_inplace(relu);
        }
        Ok(())
    }

    /// Eval-mode forward without a cache; usable on a shared model.
    pub fn predict(&self, x: &ArrayView2<T>) -> Result<Array2<T>, NnError> {
        let last = self.dense.len() - 1;
        let mut h = x.to_owned();
        for l in 0..last {
            let z = self.dense[l].forward(&h.view())?;
            h = self.norms[l].forward_eval(&z.view())?;
            h.mapv_inplace(relu);
        }
        self.dense[last].forward(&h.view())
    }

    /// Reverse-mode gradients of a scalar objective whose gradient with
    /// respect to the network output is `grad`.
    pub fn backward(&self, cache: &MlpCache<T>, grad: &ArrayView2<T>, want_input: bool) -> Result<MlpGrads<T>, NnError> {
        let layers = self.dense.len();
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        let mut gammas = Vec::with_capacity(layers - 1);
        let mut betas = Vec::with_capacity(layers - 1);
        let mut g = grad.to_owned();
        let mut input = None;
        for l in (0..layers).rev() {
            let need = l > 0 || want_input;
            let dg = self.dense[l].backward(&cache.inputs[l].view(), &g.view(), need)?;
            weights.push(dg.weight);
            biases.push(dg.bias);
            let Some(mut dx) = dg.input else { break };
            if l == 0 {
                input = Some(dx);
                break;
            }
            Zip::from(&mut dx).and(&cache.inputs[l]).for_each(|d, &a| {
                if a <= T::zero() {
                    *d = T::zero();
                }
            });
            let bn = self.norms[l - 1].backward(&cache.norms[l - 1], &dx.view());
            gammas.push(bn.gamma);
            betas.push(bn.beta);
            g = bn.input;
        }
        weights.reverse();
        biases.reverse();
        gammas.reverse();
        betas.reverse();
        Ok(MlpGrads { weights, biases, gammas, betas, input })
    }

    /// Parameter slices in the fixed optimizer order: per layer W, b, then γ, β.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(4 * self.dense.len());
        let mut norms = self.norms.iter_mut();
        for d in self.dense.iter_mut() {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
            if let Some(n) = norms.next() {
                out.push(n.gamma.as_slice_mut().expect("standard layout"));
                out.push(n.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Embeds `x` in eval mode, `chunk` rows at a time.
    pub fn predict_chunked(&self, x: &ArrayView2<T>, chunk: usize) -> Result<Array2<T>, NnError> {
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (src, mut dst) in x.axis_chunks_iter(Axis(0), chunk.max(1)).zip(out.axis_chunks_iter_mut(Axis(0), chunk.max(1))) {
            dst.assign(&self.predict(&src)?);
        }
        Ok(out)
    }
}

impl<T: Scalar> MlpGrads<T> {
    /// Same order as [`Mlp::params_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(4 * self.weights.len());
        for l in 0..self.weights.len() {
            out.push(self.weights[l].as_slice().expect("standard layout"));
            out.push(self.biases[l].as_slice().expect("standard layout"));
            if l < self.gammas.len() {
                out.push(self.gammas[l].as_slice().expect("standard layout"));
                out.push(self.betas[l].as_slice().expect("standard layout"));
            }
        }
        out
    }

    /// Accumulates another gradient (same model) into this one.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
        for (a, b) in self.gammas.iter_mut().zip(&other.gammas) {
            *a += b;
        }
        for (a, b) in self.betas.iter_mut().zip(&other.betas) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.wide().abs()))
    }
}

fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}
