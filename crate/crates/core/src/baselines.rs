//! Linear reference embedders: PCA and classical MDS.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{top_eigenpairs, LinalgError};
use crate::scalar::Scalar;

/// Largest point count handed to classical MDS.
pub const MDS_MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid target dimension {d} for {n} x {dim} input")]
    InvalidDimension { d: usize, n: usize, dim: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Affine map `x -> (x - mean) * projection`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEmbedder {
    pub mean: Vec<f64>,
    /// Row-major `[D, d]`, orthonormal columns.
    pub projection: Vec<Vec<f64>>,
    /// Sample variance along each column of the projection, nonincreasing.
    pub explained_variance: Vec<f64>,
}

impl LinearEmbedder {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn projection_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.input_dim(), self.output_dim()), |(i, k)| self.projection[i][k])
    }

    pub fn transform<T: Scalar>(&self, x: &ArrayView2<T>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let centered = x.mapv(|v| v.wide()) - &mean;
        centered.dot(&self.projection_matrix())
    }
}

/// Projection onto the top-`d` eigenvectors of the sample covariance.
pub fn pca_embed<T: Scalar>(x: &ArrayView2<T>, d: usize) -> Result<(LinearEmbedder, Array2<f64>), BaselineError> {
    let (n, dim) = x.dim();
    if d == 0 || d > n.min(dim) {
        return Err(BaselineError::InvalidDimension { d, n, dim });
    }
    let xf = x.mapv(|v| v.wide());
    let mean = xf.mean_axis(Axis(0)).expect("nonempty");
    let centered = &xf - &mean;
    let cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
    let eig = top_eigenpairs(&cov.view(), d)?;
    let coords = centered.dot(&eig.vectors);
    let embedder = LinearEmbedder {
        mean: mean.to_vec(),
        projection: eig.vectors.rows().into_iter().map(|r| r.to_vec()).collect(),
        explained_variance: eig.values.iter().map(|&v| v.max(0.0)).collect(),
    };
    Ok((embedder, coords))
}

/// Euclidean distances between all rows.
pub fn pairwise_distances<T: Scalar>(x: &ArrayView2<T>) -> Array2<f64> {
    let xf = x.mapv(|v| v.wide());
    let norms: Vec<f64> = xf.rows().into_iter().map(|r| r.dot(&r)).collect();
    let gram = xf.dot(&xf.t());
    let n = xf.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0).sqrt();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// `B = -1/2 J D^2 J` with `J = I - 11^T / N`.
pub fn double_center(dist: &ArrayView2<f64>) -> Array2<f64> {
    let sq = dist.mapv(|v| v * v);
    let row_mean = sq.mean_axis(Axis(1)).expect("nonempty");
    let col_mean = sq.mean_axis(Axis(0)).expect("nonempty");
    let grand = row_mean.mean().expect("nonempty");
    let n = sq.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| -0.5 * (sq[[i, j]] - row_mean[i] - col_mean[j] + grand))
}

/// Classical MDS: top-`d` eigenvectors of the double-centered squared
/// distances, scaled by the square roots of their (clipped) eigenvalues.
pub fn mds_embed(dist: &ArrayView2<f64>, d: usize) -> Result<Array2<f64>, BaselineError> {
    let (n, m) = dist.dim();
    if n != m {
        return Err(BaselineError::InvalidDistance(format!("{n} x {m} matrix is not square")));
    }
    if d == 0 || d > n {
        return Err(BaselineError::InvalidDimension { d, n, dim: n });
    }
    let scale = dist.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        if dist[[i, i]].abs() > tol {
            return Err(BaselineError::InvalidDistance(format!("diagonal entry {i} is {}", dist[[i, i]])));
        }
        for j in (i + 1)..n {
            let (a, b) = (dist[[i, j]], dist[[j, i]]);
            if !a.is_finite() || (a - b).abs() > tol {
                return Err(BaselineError::InvalidDistance(format!("entries ({i}, {j}) and ({j}, {i}) differ: {a} vs {b}")));
            }
        }
    }
    let b = double_center(dist);
    let eig = top_eigenpairs(&b.view(), d)?;
    let roots = eig.values.mapv(|v| v.max(0.0).sqrt());
    Ok(&eig.vectors * &roots)
}

/// `count` evenly spaced indices out of `n` (all of them when `n <= count`).
pub fn subsample_indices(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    (0..count).map(|k| k * n / count).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn planar_data_has_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = Array2::from_shape_fn((2, 10), |_| rng.random::<f64>() - 0.5);
        let coef = Array2::from_shape_fn((40, 2), |_| rng.random::<f64>() * 4.0);
        let offset = Array1::from_shape_fn(10, |i| i as f64);
        let x = coef.dot(&basis) + &offset;
        let (emb, coords) = pca_embed(&x.view(), 3).unwrap();
        assert!(emb.explained_variance[2].abs() < 1e-10);
        let p = emb.projection_matrix();
        let recon = coords.slice(ndarray::s![.., ..2]).dot(&p.slice(ndarray::s![.., ..2]).t()) + &Array1::from(emb.mean.clone());
        let worst = (&recon - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "{worst}");
        assert!(emb.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_distances_give_zero_coordinates() {
        let d = Array2::<f64>::zeros((6, 6));
        assert!(mds_embed(&d.view(), 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn asymmetric_distances_rejected() {
        let mut d = Array2::<f64>::zeros((3, 3));
        d[[0, 1]] = 1.0;
        d[[1, 0]] = 2.0;
        assert!(matches!(mds_embed(&d.view(), 2), Err(BaselineError::InvalidDistance(_))));
    }

    #[test]
    fn too_many_components_rejected() {
        let x = Array2::<f32>::zeros((5, 3));
        assert!(pca_embed(&x.view(), 4).is_err());
    }

    #[test]
    fn subsample() {
        assert_eq!(subsample_indices(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(subsample_indices(10, 4), vec![0, 2, 5, 7]);
    }
}
