//! Denoising diffusion over part-attribute tokens: schedule, denoiser,
//! classifier-free training and guided sampling.

mod checkpoint;
mod cond;
mod config;
mod loss;
pub(crate) mod model;
mod sample;
mod schedule;
mod train;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use cond::{apply_dropout, draw_dropout, ConditioningBundle, DropDecision};
pub use config::{DenoiserConfig, DropoutRates, SamplerConfig, TrainConfig};
pub use loss::foreground_loss;
pub use model::{is_image_param, parameter_manifest, AttentionRecord, DenoiseInput, Denoiser};
pub use sample::{cfg_epsilon, export_attention, sample, AttentionMap, Pin};
pub use schedule::{add_noise, make_schedule, sample_noise, NoiseSchedule, DEFAULT_BETA_1, DEFAULT_BETA_T, DEFAULT_STEPS};
pub use train::{eval_loss, LogRecord, LossComponents, TrainLog, TrainSample, Trainer};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid betas ({beta_1}, {beta_t}) for {steps} steps")]
    BadBetas { beta_1: f64, beta_t: f64, steps: usize },
    #[error("timestep {t} outside 1..={steps}")]
    BadTimestep { t: usize, steps: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("guidance needs an image condition")]
    MissingImage,
    #[error("sampling needs a connectivity graph")]
    MissingGraph,
    #[error("pin for part {part} row {row} is out of range or non-finite")]
    BadPin { part: usize, row: usize },
    #[error("tensor backend: {0}")]
    Candle(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T, E = DiffusionError> = std::result::Result<T, E>;
