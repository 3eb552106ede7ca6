//! Dense network engine: FC layers, batch normalization, ReLU, exact
//! backward passes and Adam.

mod adam;
mod batchnorm;
mod checkpoint;
mod dense;
mod mlp;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm, BnCache, BnGrads, BN_EPSILON};
pub use dense::{Dense, DenseGrads};
pub use mlp::{chain, param_count_for, Mlp, MlpCache, MlpGrads, Mode, DEFAULT_BN_MOMENTUM, DEFAULT_HIDDEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected width {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("invalid layer widths {0}")]
    InvalidWidths(String),
    #[error("parameter/gradient mismatch: {0}")]
    ParamMismatch(String),
}
