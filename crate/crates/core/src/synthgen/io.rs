//! Dataset persistence and CSV export of the ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex;

use super::{CsiDataset, Scene};
use crate::container::{Container, FormatError, PayloadKind};
use crate::scalar::Scalar;

pub const DATASET_CONTENT: &str = "csi-dataset";

impl<T: Scalar> CsiDataset<T> {
    /// Packs the dataset; the tensor is narrowed to 32-bit floats.
    pub fn to_container(&self) -> Container {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("content".to_string(), DATASET_CONTENT.to_string());
        meta.insert("scene".to_string(), serde_json::to_string(&self.scene).expect("scene serializes"));
        meta.insert("seed".to_string(), self.seed.to_string());
        let n = self.len();
        let mut dims = vec![n];
        dims.extend_from_slice(&self.shape);
        Container {
            kind: PayloadKind::Complex32,
            dims,
            meta,
            indices: (0..n as u64).collect(),
            timestamps: self.timestamps.clone(),
            pos_dim: 2,
            positions: self.positions.iter().flat_map(|p| p.iter().copied()).collect(),
            payload: self
                .samples
                .iter()
                .flat_map(|c| [c.re.to_f32().expect("finite"), c.im.to_f32().expect("finite")])
                .collect(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self, FormatError> {
        c.expect_kind(PayloadKind::Complex32)?;
        c.expect_content(DATASET_CONTENT)?;
        if c.dims.len() != 5 || c.pos_dim != 2 {
            return Err(FormatError::Corrupt(format!("dataset needs rank 5 and 2-D positions, got {:?}", c.dims)));
        }
        let scene: Scene = serde_json::from_str(c.meta("scene")?)
            .map_err(|e| FormatError::Corrupt(format!("scene metadata: {e}")))?;
        let seed = c.meta("seed")?.parse().map_err(|_| FormatError::Corrupt("seed is not an integer".into()))?;
        let samples = c.payload.chunks_exact(2).map(|p| Complex::new(T::lit(p[0] as f64), T::lit(p[1] as f64))).collect();
        let ds = CsiDataset {
            samples,
            shape: [c.dims[1], c.dims[2], c.dims[3], c.dims[4]],
            timestamps: c.timestamps.clone(),
            positions: c.positions.chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
            scene,
            seed,
        };
        ds.validate().map_err(|e| FormatError::Corrupt(e.to_string()))?;
        Ok(ds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// CSV with columns `index,t_seconds,x_m,y_m`.
pub fn positions_csv(timestamps: &[f64], positions: &[[f64; 2]]) -> String {
    let mut out = String::from("index,t_seconds,x_m,y_m\n");
    for (i, (t, p)) in timestamps.iter().zip(positions).enumerate() {
        writeln!(out, "{i},{t},{},{}", p[0], p[1]).expect("string write");
    }
    out
}

pub fn write_positions_csv(path: impl AsRef<Path>, timestamps: &[f64], positions: &[[f64; 2]]) -> std::io::Result<()> {
    fs::write(path, positions_csv(timestamps, positions))
}
