//! Triplet-based channel charting.
//!
//! The crate covers the whole chain from synthetic CSI to an evaluated chart:
//!
//! - [`synthgen`]: trajectories and a geometric multi-antenna channel with
//!   receiver impairments;
//! - [`preprocess`]: beam-domain, frequency-autocorrelation log features;
//! - [`nn`]: a dense network with batch normalization, backprop and Adam;
//! - [`charting`]: time-based triplet sampling, triplet/Siamese/autoencoder
//!   training and out-of-sample embedding;
//! - [`metrics`]: trustworthiness, continuity, Kruskal stress, Procrustes
//!   residual and excess variance;
//! - [`baselines`]: PCA and classical MDS.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the pipeline.

pub mod container;
pub mod baselines;
pub mod charting;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod scalar;
pub mod synthgen;

pub use scalar::Scalar;

pub type CsiDataset32 = synthgen::CsiDataset<f32>;
pub type CsiDataset64 = synthgen::CsiDataset<f64>;
pub type FeatureSet32 = preprocess::FeatureSet<f32>;
pub type FeatureSet64 = preprocess::FeatureSet<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type Mlp64 = nn::Mlp<f64>;
