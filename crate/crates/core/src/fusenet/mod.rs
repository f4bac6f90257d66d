//! Toy-scale fusion network and its two-step training procedure.
//!
//! A frozen frame encoder stands in for a depth foundation model. Event
//! voxels go through their own encoder and are injected into the frame
//! features by a single cross-attention adapter whose value projection
//! starts at zero, so an untrained adapter reproduces the frame-only
//! prediction exactly. All maths runs in `f64`; parameters are stored as
//! `f32`.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod losses;
mod model;
mod train;

pub use losses::{pretrain_loss, scale_invariant_loss, scale_invariant_loss_maps, total_loss, LossComponents, LossWeights};
pub use model::{
    backward, decode, encode, event_input, forward_frame_only, forward_fuse, forward_traced, frame_input,
    positional_encoding, Adapter, ArchDescriptor, Conv, Dense, FuseOutput, Group, ModelParams, Norm, OutputGrads,
    Trace, UNIT_DEPTH_BIAS,
};
pub use train::{
    pretrain, pretrain_event_encoder, train, train_foundation, EpochRecord, Phase, PreparedSample, TrainConfig, TrainOutcome,
    TrainSample,
};

use crate::easf::EasfError;
use crate::imagery::ImageryError;
use crate::mgtc::MgtcError;

#[derive(Debug, thiserror::Error)]
pub enum FusenetError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("depth must be positive on the valid mask (index {index}, value {value})")]
    NonPositiveDepth { index: usize, value: f64 },
    #[error("need at least 2 valid pixels, found {0}")]
    EmptyMask(usize),
    #[error("non-finite loss component: {0}")]
    NonFinite(&'static str),
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("loss diverged in {phase} epoch {epoch}: {detail}")]
    DivergedLoss { phase: &'static str, epoch: usize, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Imagery(#[from] ImageryError),
    #[error(transparent)]
    Easf(#[from] EasfError),
    #[error(transparent)]
    Mgtc(#[from] MgtcError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FusenetError> = std::result::Result<T, E>;
