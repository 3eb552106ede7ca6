//! Small dense linear-algebra kernels: symmetric eigensolvers and a square SVD.
//!
//! Eigenvectors are returned as columns, sorted by descending eigenvalue, with
//! the largest-magnitude entry of each vector made positive.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("requested {requested} eigenpairs of a {n}x{n} matrix")]
    TooManyPairs { requested: usize, n: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Array1<T>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: Array2<T>,
}

/// Largest matrix size handled by a full Jacobi decomposition inside
/// [`top_eigenpairs`]; larger matrices go through subspace iteration.
pub const JACOBI_LIMIT: usize = 160;

fn check_square<T: Scalar>(a: &ArrayView2<T>) -> Result<usize, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(rows)
}

fn check_symmetric<T: Scalar>(a: &ArrayView2<T>) -> Result<(), LinalgError> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.wide().abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).wide().abs());
        }
    }
    if worst > 1e-8 * scale {
        return Err(LinalgError::NotSymmetric(worst));
    }
    Ok(())
}

/// Full eigen-decomposition by cyclic Jacobi rotations.
pub fn jacobi_eigen<T: Scalar>(a: &ArrayView2<T>) -> Result<SymmetricEigen<T>, LinalgError> {
    let n = check_square(a)?;
    check_symmetric(a)?;
    let mut m = a.to_owned();
    // symmetrize exactly so rotations see one value per pair
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[[i, j]] + m[[j, i]]) * T::lit(0.5);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
    let mut v = Array2::<T>::eye(n);
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += m[[i, i]] * m[[i, i]];
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                if t == T::zero() {
                    m[[p, q]] = T::zero();
                    m[[q, p]] = T::zero();
                    continue;
                }
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = T::zero();
                m[[q, p]] = T::zero();
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let values: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    Ok(sorted_pairs(&values, &v, n))
}

fn sorted_pairs<T: Scalar>(values: &[T], vectors: &Array2<T>, keep: usize) -> SymmetricEigen<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite eigenvalues").then(a.cmp(&b)));
    let n = vectors.nrows();
    let mut out_vals = Array1::zeros(keep);
    let mut out_vecs = Array2::zeros((n, keep));
    for (dst, &src) in order.iter().take(keep).enumerate() {
        out_vals[dst] = values[src];
        let mut col = vectors.column(src).to_owned();
        fix_sign(&mut col);
        out_vecs.column_mut(dst).assign(&col);
    }
    SymmetricEigen { values: out_vals, vectors: out_vecs }
}

/// Flips `v` so that its largest-magnitude entry is positive (first one wins ties).
pub fn fix_sign<T: Scalar>(v: &mut Array1<T>) {
    let mut best = T::zero();
    let mut best_val = T::zero();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            best_val = x;
        }
    }
    if best_val < T::zero() {
        v.mapv_inplace(|x| -x);
    }
}

/// Leading `k` eigenpairs of a symmetric positive semidefinite matrix.
///
/// Small matrices are decomposed fully by Jacobi rotations. Larger ones use
/// block subspace iteration with Rayleigh-Ritz extraction; the block starts
/// from a fixed-seed random basis so results are deterministic.
pub fn top_eigenpairs<T: Scalar>(a: &ArrayView2<T>, k: usize) -> Result<SymmetricEigen<T>, LinalgError> {
    let n = check_square(a)?;
    if k > n {
        return Err(LinalgError::TooManyPairs { requested: k, n });
    }
    if n <= JACOBI_LIMIT {
        let full = jacobi_eigen(a)?;
        return Ok(SymmetricEigen {
            values: full.values.slice(s![..k]).to_owned(),
            vectors: full.vectors.slice(s![.., ..k]).to_owned(),
        });
    }
    check_symmetric(a)?;
    subspace_iteration(a, k)
}

fn subspace_iteration<T: Scalar>(a: &ArrayView2<T>, k: usize) -> Result<SymmetricEigen<T>, LinalgError> {
    let n = a.nrows();
    let block = (k + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut q = Array2::<T>::from_shape_fn((n, block), |_| T::lit(rng.random::<f64>() - 0.5));
    orthonormalize_columns(&mut q);

    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
    let tol = T::epsilon().sqrt() * T::lit(1e-3);
    let mut values = vec![T::zero(); block];
    for _iter in 0..2000 {
        let z = a.dot(&q);
        let mut h = q.t().dot(&z);
        let ht = h.t().to_owned();
        h = (&h + &ht) * T::lit(0.5);
        let ritz = jacobi_eigen(&h.view())?;
        let q_rot = q.dot(&ritz.vectors);
        let z_rot = z.dot(&ritz.vectors);
        values.clone_from_slice(ritz.values.as_slice().expect("contiguous"));
        let lead = values[0].abs().max(scale * T::epsilon());
        let converged = (0..k).all(|i| {
            let resid = (&z_rot.column(i) - &(&q_rot.column(i) * values[i]))
                .iter()
                .fold(T::zero(), |acc, &x| acc + x * x)
                .sqrt();
            resid <= tol * lead
        });
        if converged {
            return Ok(sorted_pairs(&values, &q_rot, k));
        }
        q = z_rot;
        orthonormalize_columns(&mut q);
    }
    let z = a.dot(&q);
    let h = q.t().dot(&z);
    let ritz = jacobi_eigen(&((&h + &h.t()) * T::lit(0.5)).view())?;
    let q_rot = q.dot(&ritz.vectors);
    Ok(sorted_pairs(ritz.values.as_slice().expect("contiguous"), &q_rot, k))
}

/// Modified Gram-Schmidt in place; columns that vanish are replaced by unit
/// vectors orthogonal to the previous ones.
pub fn orthonormalize_columns<T: Scalar>(q: &mut Array2<T>) {
    let (n, m) = q.dim();
    for j in 0..m {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let ci = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &ci);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm > T::epsilon() * T::lit(16.0) {
            q.column_mut(j).mapv_inplace(|x| x / norm);
        } else {
            // complete with a standard basis vector
            for e in 0..n {
                let mut cand = Array1::<T>::zeros(n);
                cand[e] = T::one();
                for i in 0..j {
                    let proj = q.column(i).dot(&cand);
                    cand.scaled_add(-proj, &q.column(i));
                }
                let cn = cand.dot(&cand).sqrt();
                if cn > T::lit(0.5) {
                    q.column_mut(j).assign(&(cand / cn));
                    break;
                }
            }
        }
    }
}

/// Singular value decomposition `m = u * diag(s) * vt` of a square matrix by
/// one-sided Jacobi rotations. Singular values are nonnegative and descending.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub s: Array1<T>,
    pub vt: Array2<T>,
}

pub fn svd_square<T: Scalar>(m: &ArrayView2<T>) -> Result<Svd<T>, LinalgError> {
    let q = check_square(m)?;
    let mut u = m.to_owned();
    let mut v = Array2::<T>::eye(q);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..q {
            for r in (p + 1)..q {
                let alpha = u.column(p).dot(&u.column(p));
                let beta = u.column(r).dot(&u.column(r));
                let gamma = u.column(p).dot(&u.column(r));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..q {
                    let up = u[[k, p]];
                    let ur = u[[k, r]];
                    u[[k, p]] = c * up - s * ur;
                    u[[k, r]] = s * up + c * ur;
                    let vp = v[[k, p]];
                    let vr = v[[k, r]];
                    v[[k, p]] = c * vp - s * vr;
                    v[[k, r]] = s * vp + c * vr;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..q).map(|j| u.column(j).dot(&u.column(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite").then(a.cmp(&b)));
    let top = norms.iter().fold(T::zero(), |a, &b| a.max(b));
    let cutoff = top * eps * T::from_count(q.max(1)) * T::lit(4.0);

    let mut su = Array2::<T>::zeros((q, q));
    let mut sv = Array2::<T>::zeros((q, q));
    let mut s = Array1::<T>::zeros(q);
    let mut rank = 0;
    for (dst, &src) in order.iter().enumerate() {
        sv.column_mut(dst).assign(&v.column(src));
        if norms[src] > cutoff {
            s[dst] = norms[src];
            su.column_mut(dst).assign(&(&u.column(src) / norms[src]));
            rank += 1;
        }
    }
    if rank < q {
        // zero the unresolved columns and complete the basis
        for j in rank..q {
            su.column_mut(j).fill(T::zero());
        }
        orthonormalize_columns(&mut su);
    }
    Ok(Svd { u: su, s, vt: sv.t().to_owned() })
}

/// Orthogonal matrix `W = U V^T` minimizing `||a W - b||_F`, where
/// `U S V^T` is the SVD of `a^T b`.
pub fn procrustes_rotation<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Result<Array2<T>, LinalgError> {
    let cross = a.t().dot(b);
    let svd = svd_square(&cross.view())?;
    Ok(svd.u.dot(&svd.vt))
}

/// Squared Euclidean distance between two rows.
#[inline]
pub fn sq_dist<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Column means of a row-major point set.
pub fn column_mean<T: Scalar>(x: &ArrayView2<T>) -> Array1<T> {
    let n = x.nrows().max(1);
    x.sum_axis(Axis(0)) / T::from_count(n)
}
