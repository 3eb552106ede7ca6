//! Synthetic massive-MIMO CSI along known trajectories.
//!
//! A single-bounce geometric channel (line of sight plus static point
//! scatterers) is evaluated at every trajectory position, then corrupted by
//! the phase, timing and gain impairments a real receiver introduces.

mod channel;
mod io;
mod scene;
mod trajectory;

pub use channel::{synthesize_csi, ImpairmentConfig};
pub use io::{positions_csv, write_positions_csv, DATASET_CONTENT};
pub use scene::{ArrayGeometry, Scatterer, Scene, SPEED_OF_LIGHT};
pub use trajectory::{generate_trajectory, Trajectory, TrajectoryConfig, TrajectoryKind};

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scene has no propagation path (line of sight disabled and no scatterers)")]
    EmptyScene,
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
}

/// Snapshots `h[i][pol][zenith][azimuth][subcarrier]` with their timestamps
/// and ground-truth positions.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset<T> {
    /// Row-major complex tensor, `len() * shape.iter().product()` entries.
    pub samples: Vec<Complex<T>>,
    /// `[pol, zenith, azimuth, subcarrier]`.
    pub shape: [usize; 4],
    pub timestamps: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub scene: Scene,
    pub seed: u64,
}

impl<T: Scalar> CsiDataset<T> {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn snapshot_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn snapshot(&self, i: usize) -> &[Complex<T>] {
        let per = self.snapshot_len();
        &self.samples[i * per..(i + 1) * per]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.timestamps.len();
        if self.positions.len() != n {
            return Err(SynthError::Invariant(format!("{} positions for {} timestamps", self.positions.len(), n)));
        }
        if self.samples.len() != n * self.snapshot_len() {
            return Err(SynthError::Invariant(format!(
                "{} samples for {} snapshots of {}",
                self.samples.len(),
                n,
                self.snapshot_len()
            )));
        }
        for i in 0..n {
            let snap = self.snapshot(i);
            if snap.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(SynthError::Invariant(format!("snapshot {i} has non-finite entries")));
            }
            if snap.iter().all(|x| x.re == T::zero() && x.im == T::zero()) {
                return Err(SynthError::Invariant(format!("snapshot {i} is all zero")));
            }
        }
        Ok(())
    }
}
