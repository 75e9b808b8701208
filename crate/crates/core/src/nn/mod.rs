//! From-scratch beamforming network.
//!
//! Input is `[Re(h_est); Im(h_est); snr_db / 10]`; hidden blocks are batch
//! normalization, dense and ReLU; the last dense layer has no activation and
//! produces phases that the Lambda layer maps to a unit-modulus beamformer.
//! Training minimizes the negative mean spectral efficiency computed with the
//! true channels.

pub mod adam;
pub mod complexity;
pub mod input;
pub mod layers;
pub mod loss;
pub mod model;
pub mod persist;
pub mod train;

pub use crate::beamformer::{lambda_forward, AnalogBeamformer};
pub use adam::{adam_step, AdamParams, AdamState};
pub use complexity::{count_flops, count_params, dense_flops, ParamRow};
pub use input::{encode_snr, pack_batch, pack_input, unpack_input};
pub use loss::{se_loss, se_loss_and_grad};
pub use model::{
    BfnnModel, ForwardPass, Gradients, Layer, LayerSpec, Mode, ModelMeta, TrainCondition,
};
pub use persist::{load_model, load_model_for, model_hash, save_model};
pub use train::{
    evaluate_loss, train, EpochRecord, PlateauSchedule, TrainConfig, TrainOutcome, TrainingSet,
};
