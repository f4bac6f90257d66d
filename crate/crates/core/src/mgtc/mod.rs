//! Motion-guided temporal correction.
//!
//! Depth edges from the ground truth are swept along the optical flow to
//! every sampled instant of the exposure; the union of the swept edges is the
//! blur band, which is split into near (foreground) and far (background)
//! pixels. A supervised contrastive loss then pulls features of the same side
//! together and pushes the two sides apart.

mod contrastive;
mod regions;
mod sample;

pub use contrastive::{contrastive_loss, ContrastiveLoss};
pub use regions::{default_edge_threshold, localize_regions, otsu_threshold, Label, RegionLabels};
pub use sample::{downsample_labels, sample_batch, ContrastiveBatch};

pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_TIMESTAMPS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
pub const DEFAULT_MAX_PER_CLASS: usize = 256;
/// Edge threshold as a fraction of the valid depth range.
pub const EDGE_FRACTION: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum MgtcError {
    #[error("no pixel exceeds the edge threshold")]
    EmptyEdges,
    #[error("timestamp list is empty")]
    NoTimestamps,
    #[error("timestamp {0} outside [-1, 1]")]
    BadTimestamp(f64),
    #[error("edge threshold must be positive, got {0}")]
    BadEdgeThreshold(f64),
    #[error("sample {0} has no positive partner")]
    NoPositives(usize),
    #[error("temperature must be positive, got {0}")]
    BadTau(f64),
    #[error("contrastive batch needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("class underflow: {foreground} foreground / {background} background samples (need 2 each)")]
    ClassUnderflow { foreground: usize, background: usize },
    #[error("max_per_class must be at least 2")]
    BadMaxPerClass,
    #[error("feature rows must have length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Imagery(#[from] crate::imagery::ImageryError),
}

pub type Result<T, E = MgtcError> = std::result::Result<T, E>;
