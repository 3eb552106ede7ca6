use std::cmp::Ordering;

use ndarray::ArrayView2;

use super::MetricError;

/// Exact K-nearest-neighbor lists (self excluded), ordered by ascending
/// Euclidean distance with ties broken by the lower index.
///
/// Only the first K entries of each ordering are stored. Ranks beyond K are
/// recovered from a distance row by [`full_ranks`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
}

pub(crate) fn sq_dist_rows(points: &ArrayView2<f64>, a: usize, b: usize) -> f64 {
    let (ra, rb) = (points.row(a), points.row(b));
    ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distances from `i` to every point.
pub(crate) fn distance_row(points: &ArrayView2<f64>, i: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..points.nrows()).map(|j| sq_dist_rows(points, i, j)));
}

fn key_cmp(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl NeighborIndex {
    pub fn build(points: &ArrayView2<f64>, k: usize) -> Result<Self, MetricError> {
        let n = points.nrows();
        if k == 0 || k >= n {
            return Err(MetricError::InvalidK { k, n });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        let mut row = Vec::with_capacity(n);
        let mut keys: Vec<(f64, usize)> = Vec::with_capacity(n);
        let neighbors = (0..n)
            .map(|i| {
                distance_row(points, i, &mut row);
                keys.clear();
                keys.extend(row.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &d)| (d, j)));
                if k < keys.len() {
                    keys.select_nth_unstable_by(k - 1, |a, b| key_cmp(*a, *b));
                }
                let head = &mut keys[..k];
                head.sort_unstable_by(|a, b| key_cmp(*a, *b));
                head.iter().map(|&(_, j)| j).collect()
            })
            .collect();
        Ok(Self { k, neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// `knn(points, K)`.
pub fn knn(points: &ArrayView2<f64>, k: usize) -> Result<NeighborIndex, MetricError> {
    NeighborIndex::build(points, k)
}

/// 1-based rank of each `query` index in the full ordering of all points
/// other than `i` by the distances in `row` (ties by index).
pub(crate) fn full_ranks(row: &[f64], i: usize, query: &[usize]) -> Vec<usize> {
    let mut q: Vec<(f64, usize, usize)> = query.iter().enumerate().map(|(slot, &u)| (row[u], u, slot)).collect();
    q.sort_unstable_by(|a, b| key_cmp((a.0, a.1), (b.0, b.1)));
    let mut hist = vec![0usize; q.len() + 1];
    for (v, &d) in row.iter().enumerate() {
        if v == i {
            continue;
        }
        let p = q.partition_point(|e| key_cmp((e.0, e.1), (d, v)) == Ordering::Less);
        hist[p] += 1;
    }
    let mut ranks = vec![0; q.len()];
    let mut acc = 0;
    for (m, e) in q.iter().enumerate() {
        acc += hist[m];
        ranks[e.2] = acc;
    }
    ranks
}
