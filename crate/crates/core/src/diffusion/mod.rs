//! Toy-scale conditional latent diffusion.
//!
//! Images are mapped to latents by a [`LatentCodec`]; a [`DualBranchModel`]
//! predicts noise with an inpainting branch and a control branch injected
//! through zero convolutions; [`train`] fits the model on procedurally
//! generated shapes and [`sample`] regenerates the masked region of a
//! condition bundle.

pub mod checkpoint;
pub mod codec;
pub mod graph;
pub mod model;
pub mod params;
pub mod probe;
pub mod sample;
pub mod schedule;
pub mod shapes;
pub mod tensor;
pub mod tokens;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use codec::{CodecConfig, CodecMode, LatentCodec};
pub use model::{DenoiseInput, DualBranchModel, ForwardOutput, InpaintInput, UNetSpec};
pub use params::{Adam, Group, ParamId, ParamStore};
pub use sample::{condition_latents, paste_back, sample, sample_with, Branches, LatentConditions};
pub use schedule::{DiffusionSchedule, Sampler};
pub use tensor::Tensor;
pub use tokens::TokenCondition;
pub use train::{Phase, TrainConfig, Trainer};

use crate::image::RasterError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("{width}x{height} is not divisible by the latent factor {factor}")]
    NotDivisible { width: usize, height: usize, factor: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("timestep {t} outside [0, {max}]")]
    TimestepOutOfRange { t: f64, max: usize },
    #[error("non-finite loss at step {step} of phase {phase}")]
    NonFiniteLoss { step: usize, phase: String },
    #[error("schedule/model mismatch: {0}")]
    ScheduleMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Condition(#[from] crate::condition::ConditionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
