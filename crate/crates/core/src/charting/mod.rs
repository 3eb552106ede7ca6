//! Time-based triplet sampling, chart costs and the training loops.

mod embedding;
mod losses;
mod train;
mod triplets;

use thiserror::Error;

use crate::nn::NnError;

pub use embedding::{ChartEmbedding, EMBEDDING_CONTENT};
pub use losses::{
    exp_loss, margin_loss, reconstruction_loss, semi_supervised_loss, siamese_loss, ExpNormalization, PairLoss,
    SemiSupervisedLoss, TripletLoss,
};
pub use train::{
    embed, labeled_rows, reconstruction_error, train_autoencoder, train_chart, train_siamese, AnchorSpec, EpochStats,
    LossKind, Schedule, TrainConfig, TrainedAutoencoder, TrainedChart,
};
pub use triplets::{admissible, curriculum_schedule, sample_triplets, TripletBatch, TripletSampler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid threshold schedule: {0}")]
    InvalidSchedule(String),
    #[error("no sample admits a close and a far partner for T_c = {t_close} s, T_f = {t_far} s")]
    EmptyCandidate { t_close: f64, t_far: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
