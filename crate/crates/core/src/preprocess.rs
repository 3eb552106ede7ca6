//! Impairment-robust CSI features.
//!
//! Each snapshot goes through three steps:
//!
//! 1. an unnormalized 2-D DFT across the zenith and azimuth antenna axes,
//!    giving the beam-domain channel `h~(p, z, a, f)`;
//! 2. the frequency autocorrelation `c(p, z, a, d) = mean_f h~(f) conj(h~(f + d))`
//!    over the `F - d` valid subcarrier pairs, kept at a sparse set of lags;
//! 3. `log(max(|c|, LOG_FLOOR))`.
//!
//! Global phase and timing offsets only multiply `c` by a unit-modulus factor,
//! so the features do not see them. Consecutive feature vectors can then be
//! stacked into sliding-window meta-samples.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex;
use thiserror::Error;

use crate::container::{Container, FormatError, PayloadKind};
use crate::scalar::Scalar;
use crate::synthgen::CsiDataset;

/// Magnitudes below this are clamped before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

pub const FEATURE_CONTENT: &str = "feature-set";

/// Sixteen lags `0, 4, ..., 60`.
pub fn default_lags() -> Vec<usize> {
    (0..16).map(|k| 4 * k).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("snapshot has {found} entries, shape {shape:?} needs {expected}")]
    ShapeMismatch { shape: [usize; 4], expected: usize, found: usize },
    #[error("lag {lag} is not below the subcarrier count {subcarriers}")]
    InvalidLag { lag: usize, subcarriers: usize },
    #[error("lag set is empty")]
    EmptyLagSet,
    #[error("meta window {window} needs more than {rows} snapshots")]
    InvalidWindow { window: usize, rows: usize },
    #[error("non-finite feature in snapshot {0}")]
    NonFinite(usize),
}

fn check_shape<T>(snapshot: &[Complex<T>], shape: [usize; 4]) -> Result<(), PreprocessError> {
    let expected = shape.iter().product();
    if snapshot.len() != expected || shape.contains(&0) {
        return Err(PreprocessError::ShapeMismatch { shape, expected, found: snapshot.len() });
    }
    Ok(())
}

fn twiddles<T: Scalar>(m: usize) -> Vec<Complex<T>> {
    (0..m)
        .map(|k| {
            let angle = -std::f64::consts::TAU * k as f64 / m as f64;
            Complex::new(T::lit(angle.cos()), T::lit(angle.sin()))
        })
        .collect()
}

/// Unnormalized 2-D DFT over the antenna axes of a `[pol, zen, azi, f]` snapshot.
pub fn beam_transform<T: Scalar>(snapshot: &[Complex<T>], shape: [usize; 4]) -> Result<Vec<Complex<T>>, PreprocessError> {
    check_shape(snapshot, shape)?;
    let [pols, mz, ma, nf] = shape;
    let wa = twiddles::<T>(ma);
    let wz = twiddles::<T>(mz);
    let zero = Complex::new(T::zero(), T::zero());

    // azimuth axis first
    let mut stage = vec![zero; snapshot.len()];
    for p in 0..pols {
        for m in 0..mz {
            let row = (p * mz + m) * ma;
            for a in 0..ma {
                let dst = &mut stage[(row + a) * nf..(row + a + 1) * nf];
                for n in 0..ma {
                    let w = wa[(a * n) % ma];
                    let src = &snapshot[(row + n) * nf..(row + n + 1) * nf];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
    }
    let mut out = vec![zero; snapshot.len()];
    for p in 0..pols {
        for z in 0..mz {
            for m in 0..mz {
                let w = wz[(z * m) % mz];
                for a in 0..ma {
                    let dst_at = ((p * mz + z) * ma + a) * nf;
                    let src_at = ((p * mz + m) * ma + a) * nf;
                    for f in 0..nf {
                        let s = stage[src_at + f];
                        out[dst_at + f] += w * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Log-magnitude frequency autocorrelation per beam, `[pol, zen, azi, lag]` flattened.
pub fn autocorr_features<T: Scalar>(
    beams: &[Complex<T>],
    shape: [usize; 4],
    lags: &[usize],
) -> Result<Vec<T>, PreprocessError> {
    check_shape(beams, shape)?;
    check_lags(lags, shape[3])?;
    let nf = shape[3];
    let floor = T::lit(LOG_FLOOR);
    let mut out = Vec::with_capacity(beams.len() / nf * lags.len());
    for beam in beams.chunks_exact(nf) {
        for &lag in lags {
            let valid = nf - lag;
            let mut acc = Complex::new(T::zero(), T::zero());
            for f in 0..valid {
                acc += beam[f] * beam[f + lag].conj();
            }
            let mag = (acc / T::from_count(valid)).norm();
            out.push(mag.max(floor).ln());
        }
    }
    Ok(out)
}

fn check_lags(lags: &[usize], subcarriers: usize) -> Result<(), PreprocessError> {
    if lags.is_empty() {
        return Err(PreprocessError::EmptyLagSet);
    }
    if let Some(&lag) = lags.iter().find(|&&l| l >= subcarriers) {
        return Err(PreprocessError::InvalidLag { lag, subcarriers });
    }
    Ok(())
}

/// Beam transform followed by the autocorrelation features.
pub fn snapshot_features<T: Scalar>(
    snapshot: &[Complex<T>],
    shape: [usize; 4],
    lags: &[usize],
) -> Result<Vec<T>, PreprocessError> {
    let beams = beam_transform(snapshot, shape)?;
    autocorr_features(&beams, shape, lags)
}

/// Real feature matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    /// `[rows, snapshot_dim * (meta_window + 1)]`.
    pub features: Array2<T>,
    pub lags: Vec<usize>,
    pub meta_window: usize,
    /// Width of one snapshot's feature vector.
    pub snapshot_dim: usize,
    /// Snapshot index each row was built around.
    pub source_indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.row(i)
    }

    /// Positions as an `[rows, 2]` matrix.
    pub fn position_matrix(&self) -> Array2<T> {
        Array2::from_shape_fn((self.positions.len(), 2), |(i, j)| T::lit(self.positions[i][j]))
    }

    pub fn to_container(&self) -> Container {
        let mut meta = BTreeMap::new();
        meta.insert("content".to_string(), FEATURE_CONTENT.to_string());
        meta.insert("lags".to_string(), serde_json::to_string(&self.lags).expect("lags serialize"));
        meta.insert("meta_window".to_string(), self.meta_window.to_string());
        meta.insert("snapshot_dim".to_string(), self.snapshot_dim.to_string());
        Container {
            kind: PayloadKind::Real32,
            dims: vec![self.len(), self.dim()],
            meta,
            indices: self.source_indices.iter().map(|&i| i as u64).collect(),
            timestamps: self.timestamps.clone(),
            pos_dim: 2,
            positions: self.positions.iter().flat_map(|p| p.iter().copied()).collect(),
            payload: self.features.iter().map(|v| v.to_f32().expect("finite")).collect(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self, FormatError> {
        c.expect_kind(PayloadKind::Real32)?;
        c.expect_content(FEATURE_CONTENT)?;
        if c.dims.len() != 2 || c.pos_dim != 2 {
            return Err(FormatError::Corrupt(format!("feature set needs rank 2, got {:?}", c.dims)));
        }
        let parse = |k: &str| -> Result<usize, FormatError> {
            c.meta(k)?.parse().map_err(|_| FormatError::Corrupt(format!("`{k}` is not an integer")))
        };
        let lags: Vec<usize> =
            serde_json::from_str(c.meta("lags")?).map_err(|e| FormatError::Corrupt(format!("lags: {e}")))?;
        let features = Array2::from_shape_vec((c.dims[0], c.dims[1]), c.payload.iter().map(|&v| T::lit(v as f64)).collect())
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        Ok(FeatureSet {
            features,
            lags,
            meta_window: parse("meta_window")?,
            snapshot_dim: parse("snapshot_dim")?,
            source_indices: c.indices.iter().map(|&i| i as usize).collect(),
            timestamps: c.timestamps.clone(),
            positions: c.positions.chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<(), FormatError> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self, FormatError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Per-snapshot features stacked into meta-samples of `meta_window + 1`
/// consecutive snapshots, newest first. The first `meta_window` snapshots
/// have no complete history and are dropped.
pub fn build_features<T: Scalar>(
    dataset: &CsiDataset<T>,
    lags: &[usize],
    meta_window: usize,
) -> Result<FeatureSet<T>, PreprocessError> {
    let n = dataset.len();
    if meta_window >= n {
        return Err(PreprocessError::InvalidWindow { window: meta_window, rows: n });
    }
    check_lags(lags, dataset.shape[3])?;
    let [pols, mz, ma, _] = dataset.shape;
    let dim = pols * mz * ma * lags.len();

    let mut per_snapshot = Array2::<T>::zeros((n, dim));
    for i in 0..n {
        let f = snapshot_features(dataset.snapshot(i), dataset.shape, lags)?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite(i));
        }
        per_snapshot.row_mut(i).assign(&ArrayView1::from(&f[..]));
    }
    if meta_window == 0 {
        return Ok(FeatureSet {
            features: per_snapshot,
            lags: lags.to_vec(),
            meta_window,
            snapshot_dim: dim,
            source_indices: (0..n).collect(),
            timestamps: dataset.timestamps.clone(),
            positions: dataset.positions.clone(),
        });
    }

    let rows = n - meta_window;
    let width = dim * (meta_window + 1);
    let mut features = Array2::<T>::zeros((rows, width));
    for r in 0..rows {
        let i = r + meta_window;
        let mut dst = features.row_mut(r);
        for back in 0..=meta_window {
            dst.slice_mut(ndarray::s![back * dim..(back + 1) * dim]).assign(&per_snapshot.row(i - back));
        }
    }
    Ok(FeatureSet {
        features,
        lags: lags.to_vec(),
        meta_window,
        snapshot_dim: dim,
        source_indices: (meta_window..n).collect(),
        timestamps: dataset.timestamps[meta_window..].to_vec(),
        positions: dataset.positions[meta_window..].to_vec(),
    })
}
