use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::container::{Container, FormatError, PayloadKind};

pub const EMBEDDING_CONTENT: &str = "chart-embedding";

/// Latent coordinates with the row bookkeeping needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartEmbedding {
    pub coords: Array2<f64>,
    /// Snapshot index of each row in the source dataset.
    pub indices: Vec<usize>,
    pub timestamps: Vec<f64>,
    /// Ground-truth positions, carried for evaluation only.
    pub positions: Vec<[f64; 2]>,
    /// Config hash, seed, method and tool version.
    pub provenance: BTreeMap<String, String>,
}

impl ChartEmbedding {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn position_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.positions.len(), 2), |(i, k)| self.positions[i][k])
    }

    /// `# key=value` provenance lines, then `index,t,y1..yd`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("index,t");
        for k in 1..=self.dim() {
            let _ = write!(s, ",y{k}");
        }
        s.push('\n');
        for (r, row) in self.coords.rows().into_iter().enumerate() {
            let _ = write!(s, "{},{}", self.indices[r], self.timestamps[r]);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    pub fn to_container(&self) -> Container {
        let mut meta = self.provenance.clone();
        meta.insert("content".into(), EMBEDDING_CONTENT.into());
        Container {
            kind: PayloadKind::Real32,
            dims: vec![self.len(), self.dim()],
            meta,
            indices: self.indices.iter().map(|&i| i as u64).collect(),
            timestamps: self.timestamps.clone(),
            pos_dim: 2,
            positions: self.positions.iter().flatten().copied().collect(),
            payload: self.coords.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self, FormatError> {
        c.expect_kind(PayloadKind::Real32)?;
        c.expect_content(EMBEDDING_CONTENT)?;
        if c.dims.len() != 2 || c.pos_dim != 2 {
            return Err(FormatError::Corrupt(format!("embedding dims {:?}, pos_dim {}", c.dims, c.pos_dim)));
        }
        let coords = Array2::from_shape_vec((c.dims[0], c.dims[1]), c.payload.iter().map(|&v| v as f64).collect())
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let mut provenance = c.meta.clone();
        provenance.remove("content");
        Ok(Self {
            coords,
            indices: c.indices.iter().map(|&i| i as usize).collect(),
            timestamps: c.timestamps.clone(),
            positions: c.positions.chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
            provenance,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_container(&Container::read(path)?)
    }
}
