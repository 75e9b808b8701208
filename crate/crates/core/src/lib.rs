//! Deep-learning analog beamforming for single-RF-chain mmWave arrays.
//!
//! The crate generates sparse multipath MISO channels, simulates a
//! pilot-based hierarchical channel estimator, trains a small network that
//! maps imperfect channel estimates to constant-modulus phase-shifter
//! settings, and compares it against phase matching on the same estimates.

pub mod baseline;
pub mod beamformer;
pub mod channel;
mod container;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod nn;
pub mod rng;

pub use baseline::{baseline_on_estimate, egt_beamformer, perfect_csi_bound, spectral_efficiency};
pub use beamformer::{lambda_forward, AnalogBeamformer};
pub use channel::{
    array_response, generate_channel, generate_dataset, ChannelConfig, ChannelDataset,
    ChannelSample, PathParams, SnrRule,
};
pub use container::sha256_hex;
pub use error::{Error, Result};
pub use estimator::{
    estimate_batch, estimate_channel, ChannelEstimate, EstimateSet, Estimator, EstimatorConfig,
};
pub use nn::{BfnnModel, TrainConfig, TrainingSet};
