//! Triplet, semi-supervised, Siamese and reconstruction costs with their
//! gradients with respect to the latent points. Values are accumulated in `f64`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ChartError;
use crate::scalar::Scalar;

/// Cost value plus gradients with respect to anchor, close and far latents.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss<T> {
    pub value: f64,
    pub grad_anchor: Array2<T>,
    pub grad_close: Array2<T>,
    pub grad_far: Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpNormalization {
    /// `(1/|T|) log sum exp(d_ij - d_ik)`.
    #[default]
    ScaledLogSum,
    /// `log((1/|T|) sum exp(d_ij - d_ik))`.
    LogMeanExp,
}

fn check_triplets<T>(a: &ArrayView2<T>, c: &ArrayView2<T>, f: &ArrayView2<T>) {
    assert!(a.dim() == c.dim() && a.dim() == f.dim(), "triplet latents must share a shape");
}

/// Distance and unit direction from `b` to `a`; the direction is zero at coincident points.
fn dist_dir<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView2<T>, row: usize, dir: &mut [f64]) -> f64 {
    let mut s = 0.0;
    for (k, d) in dir.iter_mut().enumerate() {
        *d = a[[row, k]].wide() - b[[row, k]].wide();
        s += *d * *d;
    }
    let n = s.sqrt();
    for d in dir.iter_mut() {
        *d = if n > 0.0 { *d / n } else { 0.0 };
    }
    n
}

/// Accumulates `w * (d d_ij - d d_ik)` into the three gradients for triple `row`.
fn push_triplet_grad<T: Scalar>(out: &mut TripletLoss<T>, row: usize, w: f64, u_ij: &[f64], u_ik: &[f64]) {
    for k in 0..u_ij.len() {
        out.grad_anchor[[row, k]] += T::lit(w * (u_ij[k] - u_ik[k]));
        out.grad_close[[row, k]] += T::lit(-w * u_ij[k]);
        out.grad_far[[row, k]] += T::lit(w * u_ik[k]);
    }
}

fn zero_loss<T: Scalar>(shape: (usize, usize)) -> TripletLoss<T> {
    TripletLoss { value: 0.0, grad_anchor: Array2::zeros(shape), grad_close: Array2::zeros(shape), grad_far: Array2::zeros(shape) }
}

/// Mean over triples of `(d_ij - d_ik + margin)+`. An empty batch costs 0.
pub fn margin_loss<T: Scalar>(anchor: &ArrayView2<T>, close: &ArrayView2<T>, far: &ArrayView2<T>, margin: f64) -> TripletLoss<T> {
    check_triplets(anchor, close, far);
    let (b, d) = anchor.dim();
    let mut out = zero_loss(anchor.dim());
    if b == 0 {
        return out;
    }
    let w = 1.0 / b as f64;
    let (mut u_ij, mut u_ik) = (vec![0.0; d], vec![0.0; d]);
    let mut total = 0.0;
    for row in 0..b {
        let dij = dist_dir(anchor, close, row, &mut u_ij);
        let dik = dist_dir(anchor, far, row, &mut u_ik);
        let h = dij - dik + margin;
        if h > 0.0 {
            total += h;
            push_triplet_grad(&mut out, row, w, &u_ij, &u_ik);
        }
    }
    out.value = total * w;
    out
}

/// Soft maximum of the distance differences, stabilized by a max shift.
pub fn exp_loss<T: Scalar>(anchor: &ArrayView2<T>, close: &ArrayView2<T>, far: &ArrayView2<T>, norm: ExpNormalization) -> TripletLoss<T> {
    check_triplets(anchor, close, far);
    let (b, d) = anchor.dim();
    let mut out = zero_loss(anchor.dim());
    if b == 0 {
        return out;
    }
    let mut u_ij = vec![0.0; b * d];
    let mut u_ik = vec![0.0; b * d];
    let diffs: Vec<f64> = (0..b)
        .map(|row| {
            dist_dir(anchor, close, row, &mut u_ij[row * d..(row + 1) * d]) - dist_dir(anchor, far, row, &mut u_ik[row * d..(row + 1) * d])
        })
        .collect();
    let shift = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = diffs.iter().map(|s| (s - shift).exp()).collect();
    let z: f64 = weights.iter().sum();
    let lse = shift + z.ln();
    let (value, scale) = match norm {
        ExpNormalization::ScaledLogSum => (lse / b as f64, 1.0 / b as f64),
        ExpNormalization::LogMeanExp => (lse - (b as f64).ln(), 1.0),
    };
    for row in 0..b {
        let w = scale * weights[row] / z;
        push_triplet_grad(&mut out, row, w, &u_ij[row * d..(row + 1) * d], &u_ik[row * d..(row + 1) * d]);
    }
    out.value = value;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupervisedLoss<T> {
    pub value: f64,
    pub triplet: TripletLoss<T>,
    pub penalty: f64,
    /// Gradient with respect to the labeled latents.
    pub grad_labeled: Array2<T>,
}

/// Margin cost plus `(alpha/|P|) sum ||proj y_l - p_l||` over the labeled latents.
///
/// `projection` is `[q, d]`, `positions` is `[|P|, q]`.
#[allow(clippy::too_many_arguments)]
pub fn semi_supervised_loss<T: Scalar>(
    anchor: &ArrayView2<T>,
    close: &ArrayView2<T>,
    far: &ArrayView2<T>,
    labeled: &ArrayView2<T>,
    positions: &ArrayView2<f64>,
    projection: &ArrayView2<f64>,
    alpha: f64,
    margin: f64,
) -> Result<SemiSupervisedLoss<T>, ChartError> {
    if !(alpha >= 0.0) {
        return Err(ChartError::InvalidConfig(format!("alpha must be nonnegative, got {alpha}")));
    }
    if labeled.nrows() != positions.nrows() {
        return Err(ChartError::InvalidConfig(format!("{} labeled latents for {} positions", labeled.nrows(), positions.nrows())));
    }
    if labeled.nrows() == 0 && alpha > 0.0 {
        return Err(ChartError::InvalidConfig("alpha > 0 needs at least one labeled sample".into()));
    }
    if labeled.nrows() > 0 && (projection.ncols() != labeled.ncols() || projection.nrows() != positions.ncols()) {
        return Err(ChartError::InvalidConfig(format!(
            "projection is {:?}, latents have width {}, positions width {}",
            projection.dim(),
            labeled.ncols(),
            positions.ncols()
        )));
    }
    let triplet = margin_loss(anchor, close, far, margin);
    let mut grad_labeled = Array2::zeros(labeled.raw_dim());
    let mut penalty = 0.0;
    if alpha > 0.0 {
        let w = alpha / labeled.nrows() as f64;
        let (q, d) = projection.dim();
        let mut r = vec![0.0; q];
        for l in 0..labeled.nrows() {
            for a in 0..q {
                r[a] = (0..d).map(|k| projection[[a, k]] * labeled[[l, k]].wide()).sum::<f64>() - positions[[l, a]];
            }
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            penalty += n;
            if n > 0.0 {
                for k in 0..d {
                    let g: f64 = (0..q).map(|a| projection[[a, k]] * r[a]).sum::<f64>() / n;
                    grad_labeled[[l, k]] = T::lit(w * g);
                }
            }
        }
        penalty *= w;
    }
    Ok(SemiSupervisedLoss { value: triplet.value + penalty, triplet, penalty, grad_labeled })
}

/// Pair cost value and gradients with respect to both latents.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss<T> {
    pub value: f64,
    pub grad_first: Array2<T>,
    pub grad_second: Array2<T>,
}

/// Mean of `(||x_i - x_j|| - ||y_i - y_j||)^2` over rows.
pub fn siamese_loss<T: Scalar>(x_i: &ArrayView2<T>, x_j: &ArrayView2<T>, y_i: &ArrayView2<T>, y_j: &ArrayView2<T>) -> PairLoss<T> {
    assert!(x_i.dim() == x_j.dim() && y_i.dim() == y_j.dim() && x_i.nrows() == y_i.nrows(), "pair shapes disagree");
    let (b, d) = y_i.dim();
    let mut out = PairLoss { value: 0.0, grad_first: Array2::zeros((b, d)), grad_second: Array2::zeros((b, d)) };
    if b == 0 {
        return out;
    }
    let mut u = vec![0.0; d];
    let mut ux = vec![0.0; x_i.ncols()];
    let mut total = 0.0;
    for row in 0..b {
        let dx = dist_dir(x_i, x_j, row, &mut ux);
        let dy = dist_dir(y_i, y_j, row, &mut u);
        let e = dx - dy;
        total += e * e;
        let w = -2.0 * e / b as f64;
        for k in 0..d {
            out.grad_first[[row, k]] = T::lit(w * u[k]);
            out.grad_second[[row, k]] = T::lit(-w * u[k]);
        }
    }
    out.value = total / b as f64;
    out
}

/// Mean over rows of `||x - x_hat||^2`, with the gradient with respect to `x_hat`.
pub fn reconstruction_loss<T: Scalar>(x: &ArrayView2<T>, x_hat: &ArrayView2<T>) -> (f64, Array2<T>) {
    assert_eq!(x.dim(), x_hat.dim(), "reconstruction shape");
    let b = x.nrows();
    if b == 0 {
        return (0.0, Array2::zeros(x.raw_dim()));
    }
    let mut total = 0.0;
    let w = T::lit(2.0 / b as f64);
    let mut grad = Array2::zeros(x.raw_dim());
    ndarray::Zip::from(&mut grad).and(x).and(x_hat).for_each(|g, &a, &r| {
        let e = r - a;
        total += e.wide() * e.wide();
        *g = w * e;
    });
    (total / b as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn margin_examples() {
        let z = array![[0.3, -1.0]];
        let l = margin_loss(&z.view(), &z.view(), &z.view(), 1.0);
        assert_eq!(l.value, 1.0);

        let (a, c, f) = (array![[0.0, 0.0]], array![[0.0, 2.0]], array![[0.0, 1.0]]);
        assert!((margin_loss(&a.view(), &c.view(), &f.view(), 1.0).value - 2.0).abs() < 1e-15);

        let (a, c, f) = (array![[0.0, 0.0]], array![[3.0, 4.0]], array![[6.0, 8.0]]);
        let l = margin_loss(&a.view(), &c.view(), &f.view(), 1.0);
        assert_eq!(l.value, 0.0);
        assert!(l.grad_anchor.iter().chain(&l.grad_close).chain(&l.grad_far).all(|&g| g == 0.0));
    }

    #[test]
    fn exp_examples() {
        let (a, c, f) = (array![[0.0, 0.0]], array![[1.0, 0.0]], array![[0.0, 1.0]]);
        assert!(exp_loss(&a.view(), &c.view(), &f.view(), ExpNormalization::ScaledLogSum).value.abs() < 1e-15);
        let z = array![[0.0, 0.0], [1.0, 1.0]];
        let l = exp_loss(&z.view(), &z.view(), &z.view(), ExpNormalization::ScaledLogSum);
        assert!((l.value - 0.5 * 2f64.ln()).abs() < 1e-15);
        let m = exp_loss(&z.view(), &z.view(), &z.view(), ExpNormalization::LogMeanExp);
        assert!(m.value.abs() < 1e-15);
    }

    #[test]
    fn exp_shift_moves_log_sum_by_constant() {
        // Moving every far point away by c lowers every difference by c.
        let a = array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let c = array![[1.0, 0.0], [0.0, 2.0], [0.5, 0.0]];
        let f = array![[3.0, 0.0], [0.0, 1.0], [2.0, 0.0]];
        let f2 = array![[3.7, 0.0], [0.0, 1.7], [2.7, 0.0]];
        let l1 = exp_loss(&a.view(), &c.view(), &f.view(), ExpNormalization::ScaledLogSum).value * 3.0;
        let l2 = exp_loss(&a.view(), &c.view(), &f2.view(), ExpNormalization::ScaledLogSum).value * 3.0;
        assert!((l1 - l2 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn semi_supervised_examples() {
        let a = array![[0.0, 0.0], [1.0, 2.0]];
        let c = array![[0.5, 0.0], [1.0, 2.5]];
        let f = array![[0.1, 0.0], [4.0, 2.0]];
        let p = Array2::<f64>::eye(2);
        let none = Array2::<f64>::zeros((0, 2));
        let l = semi_supervised_loss(&a.view(), &c.view(), &f.view(), &none.view(), &none.view(), &p.view(), 0.0, 1.0).unwrap();
        assert_eq!(l.value, margin_loss(&a.view(), &c.view(), &f.view(), 1.0).value);

        let y = array![[1.0, -2.0], [0.5, 0.5]];
        let l = semi_supervised_loss(&a.view(), &c.view(), &f.view(), &y.view(), &y.view(), &p.view(), 1.0, 1.0).unwrap();
        assert_eq!(l.penalty, 0.0);

        let e = Array2::<f64>::zeros((0, 2));
        let y = array![[0.0, 0.0]];
        let pos = array![[3.0, 4.0]];
        let l = semi_supervised_loss(&e.view(), &e.view(), &e.view(), &y.view(), &pos.view(), &p.view(), 1.0, 1.0).unwrap();
        assert!((l.value - 5.0).abs() < 1e-15);

        assert!(semi_supervised_loss(&a.view(), &c.view(), &f.view(), &none.view(), &none.view(), &p.view(), 0.5, 1.0).is_err());
    }

    #[test]
    fn siamese_symmetry_and_zero_cost() {
        let x = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        let y = array![[0.5, 0.5], [0.5, 0.5]];
        let l = siamese_loss(&x.view(), &x.view(), &y.view(), &y.view());
        assert_eq!(l.value, 0.0);

        let xi = array![[1.0, 0.0, 0.0], [0.0, 2.0, 1.0]];
        let xj = array![[0.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let yi = array![[0.1, 0.2], [1.0, 1.0]];
        let yj = array![[0.4, -0.3], [0.0, 2.0]];
        let ab = siamese_loss(&xi.view(), &xj.view(), &yi.view(), &yj.view());
        let ba = siamese_loss(&xj.view(), &xi.view(), &yj.view(), &yi.view());
        assert_eq!(ab.value, ba.value);
    }

    #[test]
    fn reconstruction_nonnegative() {
        let x = array![[1.0f32, -2.0], [0.0, 4.0]];
        assert_eq!(reconstruction_loss(&x.view(), &x.view()).0, 0.0);
        let y = array![[0.0f32, 0.0], [0.0, 0.0]];
        assert!((reconstruction_loss(&x.view(), &y.view()).0 - 10.5).abs() < 1e-12);
    }
}
