//! Chart quality against a reference configuration: trustworthiness,
//! continuity, Kruskal stress, Procrustes residual and excess variance.
//!
//! Ranks `n_i(u)` are positions in the full ordering of all other points by
//! reference distance, so a latent neighbor that is also a reference
//! K-neighbor costs nothing and one ranked `K + m` costs `m`.

mod neighbors;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{jacobi_eigen, procrustes_rotation, LinalgError};
pub use neighbors::{knn, NeighborIndex};
use neighbors::{distance_row, full_ranks};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("invalid neighborhood size K = {k} for N = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("point sets disagree: {0}")]
    Shape(String),
    #[error("degenerate embedding: {0}")]
    Degenerate(String),
    #[error("non-finite coordinates")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Scaling of the trustworthiness and continuity penalty sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `2 / (N K (2N - 3K - 1))` for both scores; keeps them in `[0, 1]`.
    #[default]
    Canonical,
    /// `2 / (C N)` for trustworthiness and `1 / (N C)` for continuity, with `C = K (2N - 3K - 1) / 2`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    #[default]
    Geographic,
    Ambient,
}

fn check_pair(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>) -> Result<usize, MetricError> {
    let n = reference.nrows();
    if latent.nrows() != n {
        return Err(MetricError::Shape(format!("{n} reference rows, {} latent rows", latent.nrows())));
    }
    if reference.iter().chain(latent.iter()).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(n)
}

fn check_k(n: usize, k: usize) -> Result<(), MetricError> {
    if k == 0 || k >= n || 2 * n <= 3 * k + 1 {
        return Err(MetricError::InvalidK { k, n });
    }
    Ok(())
}

/// Sum over points of `(rank_in_ranked_space(u) - K)+` for `u` in the K-neighborhoods of `neighbors`.
fn rank_penalty(ranked: &ArrayView2<f64>, neighbors: &NeighborIndex) -> f64 {
    let k = neighbors.k;
    let mut row = Vec::with_capacity(ranked.nrows());
    let mut total: u64 = 0;
    for (i, list) in neighbors.neighbors.iter().enumerate() {
        distance_row(ranked, i, &mut row);
        total += full_ranks(&row, i, list).iter().map(|&r| r.saturating_sub(k) as u64).sum::<u64>();
    }
    total as f64
}

fn scale(n: usize, k: usize, norm: Normalization, trust: bool) -> f64 {
    let (n, k) = (n as f64, k as f64);
    let canonical = 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0));
    match (norm, trust) {
        (Normalization::AsPrinted, true) => 2.0 * canonical,
        _ => canonical,
    }
}

/// Trustworthiness from precomputed latent neighborhoods.
pub fn trustworthiness_with(reference: &ArrayView2<f64>, latent_nn: &NeighborIndex, norm: Normalization) -> Result<f64, MetricError> {
    let n = reference.nrows();
    check_k(n, latent_nn.k)?;
    if latent_nn.len() != n {
        return Err(MetricError::Shape(format!("{} neighbor lists for {n} points", latent_nn.len())));
    }
    Ok(1.0 - scale(n, latent_nn.k, norm, true) * rank_penalty(reference, latent_nn))
}

/// Continuity from precomputed reference neighborhoods.
pub fn continuity_with(latent: &ArrayView2<f64>, reference_nn: &NeighborIndex, norm: Normalization) -> Result<f64, MetricError> {
    let n = latent.nrows();
    check_k(n, reference_nn.k)?;
    if reference_nn.len() != n {
        return Err(MetricError::Shape(format!("{} neighbor lists for {n} points", reference_nn.len())));
    }
    Ok(1.0 - scale(n, reference_nn.k, norm, false) * rank_penalty(latent, reference_nn))
}

/// Penalizes latent neighbors that are far apart in the reference space.
pub fn trustworthiness(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>, k: usize, norm: Normalization) -> Result<f64, MetricError> {
    let n = check_pair(reference, latent)?;
    check_k(n, k)?;
    trustworthiness_with(reference, &knn(latent, k)?, norm)
}

/// Penalizes reference neighbors that are far apart in the latent space.
pub fn continuity(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>, k: usize, norm: Normalization) -> Result<f64, MetricError> {
    let n = check_pair(reference, latent)?;
    check_k(n, k)?;
    continuity_with(latent, &knn(reference, k)?, norm)
}

/// Normalized mismatch of all pairwise distances after the optimal global scale.
pub fn kruskal_stress(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>) -> Result<f64, MetricError> {
    let n = check_pair(reference, latent)?;
    let pair = |i: usize, j: usize| (neighbors::sq_dist_rows(reference, i, j).sqrt(), neighbors::sq_dist_rows(latent, i, j).sqrt());
    let (mut rr, mut ry, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let (dr, dy) = pair(i, j);
            rr += dr * dr;
            ry += dr * dy;
            yy += dy * dy;
        }
    }
    if !(rr > 0.0) {
        return Err(MetricError::Degenerate("reference points all coincide".into()));
    }
    let beta = if yy > 0.0 { ry / yy } else { 0.0 };
    let mut num = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (dr, dy) = pair(i, j);
            num += (dr - beta * dy) * (dr - beta * dy);
        }
    }
    Ok((num / rr).sqrt())
}

/// Centered copy and RMS radius `sqrt(mean ||x - mean||^2)`.
fn center(x: &ArrayView2<f64>) -> (Array2<f64>, f64) {
    let n = x.nrows().max(1) as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let c = x - &mean;
    let sigma = (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    (c, sigma)
}

/// Latent centered and scaled to the reference RMS radius.
pub fn rescale_latent(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>) -> Result<Array2<f64>, MetricError> {
    let (_, sigma_r) = center(reference);
    let (y, sigma_y) = center(latent);
    if !(sigma_y > 0.0) {
        return Err(MetricError::Degenerate("latent points all coincide".into()));
    }
    Ok(y * (sigma_r / sigma_y))
}

/// Centered latent reduced or padded to `q` columns: top-`q` principal axes
/// when wider, zero columns when narrower.
fn match_width(y: Array2<f64>, q: usize) -> Result<Array2<f64>, MetricError> {
    let d = y.ncols();
    if d == q {
        return Ok(y);
    }
    if d < q {
        let mut out = Array2::zeros((y.nrows(), q));
        out.slice_mut(s![.., ..d]).assign(&y);
        return Ok(out);
    }
    let cov = y.t().dot(&y);
    let eig = jacobi_eigen(&cov.view())?;
    Ok(y.dot(&eig.vectors.slice(s![.., ..q])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procrustes {
    /// Mean squared residual between the aligned latent and the centered reference.
    pub sr: f64,
    /// Latent after centering, scaling and the optimal orthogonal map.
    pub aligned: Array2<f64>,
    pub rotation: Array2<f64>,
}

/// Optimal scaling, rotation and reflection of the latent onto the reference.
pub fn procrustes_sr(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>) -> Result<Procrustes, MetricError> {
    let n = check_pair(reference, latent)?;
    if n < 2 {
        return Err(MetricError::Shape("need at least 2 points".into()));
    }
    let (r, _) = center(reference);
    let (y, _) = center(latent);
    let y = match_width(y, r.ncols())?;
    let y = rescale_latent(&r.view(), &y.view())?;
    let rotation = procrustes_rotation(&y.view(), &r.view())?;
    let aligned = y.dot(&rotation);
    let sr = (&aligned - &r).iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok(Procrustes { sr, aligned, rotation })
}

fn neighborhood_spread(points: &ArrayView2<f64>, nn: &NeighborIndex) -> f64 {
    let q = points.ncols();
    let mut mu = vec![0.0; q];
    let mut total = 0.0;
    for list in &nn.neighbors {
        mu.iter_mut().for_each(|m| *m = 0.0);
        for &u in list {
            for (m, v) in mu.iter_mut().zip(points.row(u)) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= list.len() as f64);
        for &u in list {
            total += points.row(u).iter().zip(&mu).map(|(v, m)| (v - m) * (v - m)).sum::<f64>();
        }
    }
    total
}

/// Excess variance from precomputed neighborhoods (self excluded).
pub fn excess_variance_with(
    reference: &ArrayView2<f64>,
    latent: &ArrayView2<f64>,
    reference_nn: &NeighborIndex,
    latent_nn: &NeighborIndex,
) -> Result<f64, MetricError> {
    let n = check_pair(reference, latent)?;
    let k = reference_nn.k;
    if latent_nn.k != k || reference_nn.len() != n || latent_nn.len() != n {
        return Err(MetricError::Shape("neighbor indexes disagree with the point sets".into()));
    }
    let y_hat = rescale_latent(reference, latent)?;
    let (r_hat, _) = center(reference);
    let excess = neighborhood_spread(&y_hat.view(), latent_nn) - neighborhood_spread(&r_hat.view(), reference_nn);
    Ok(excess / (k * n) as f64)
}

/// Mean local spread of the rescaled latent neighborhoods minus that of the reference neighborhoods.
pub fn excess_variance(reference: &ArrayView2<f64>, latent: &ArrayView2<f64>, k: usize) -> Result<f64, MetricError> {
    let n = check_pair(reference, latent)?;
    if k == 0 || k >= n {
        return Err(MetricError::InvalidK { k, n });
    }
    excess_variance_with(reference, latent, &knn(reference, k)?, &knn(latent, k)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct MetricReport {
    pub KS: f64,
    pub TW: f64,
    pub CT: f64,
    pub SR: f64,
    pub EV: f64,
    pub K: usize,
    pub reference: ReferenceKind,
    pub normalization: Normalization,
    pub N: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "KS,TW,CT,SR,EV";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.KS, self.TW, self.CT, self.SR, self.EV)
    }
}

/// All five metrics with one neighbor index per space.
pub fn metric_report(
    reference: &ArrayView2<f64>,
    latent: &ArrayView2<f64>,
    k: usize,
    reference_kind: ReferenceKind,
    norm: Normalization,
) -> Result<MetricReport, MetricError> {
    let n = check_pair(reference, latent)?;
    check_k(n, k)?;
    let ref_nn = knn(reference, k)?;
    let lat_nn = knn(latent, k)?;
    Ok(MetricReport {
        KS: kruskal_stress(reference, latent)?,
        TW: trustworthiness_with(reference, &lat_nn, norm)?,
        CT: continuity_with(latent, &ref_nn, norm)?,
        SR: procrustes_sr(reference, latent)?.sr,
        EV: excess_variance_with(reference, latent, &ref_nn, &lat_nn)?,
        K: k,
        reference: reference_kind,
        normalization: norm,
        N: n,
    })
}
