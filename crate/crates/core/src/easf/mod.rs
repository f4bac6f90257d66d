//! Entropy-aware spatial fusion.
//!
//! Patch entropy measures how much signal each modality carries locally; the
//! weight map turns the two entropies into a per-patch event weight, and the
//! spatial loss pulls fused features towards whichever modality the weight
//! map favours.

mod entropy;
mod loss;

pub use entropy::{patch_entropy_event, patch_entropy_frame, shannon_entropy_normalized, EntropyMap, EntropySource};
pub use loss::{resize_nearest, spatial_loss, SpatialLoss};
pub(crate) use loss::softplus;

use crate::imagery::Field;

pub const DEFAULT_PATCH_SIZE: usize = 16;
pub const DEFAULT_ENTROPY_BINS: usize = 32;
pub const DEFAULT_THRESHOLD: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum EasfError {
    #[error("histogram needs at least 2 bins, got {0}")]
    BadBins(usize),
    #[error("patch size must be positive")]
    BadPatch,
    #[error("threshold {0} outside (0, 2]")]
    BadThreshold(f64),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("feature vector at location {location} has norm below 1e-8")]
    ZeroNorm { location: usize },
}

pub type Result<T, E = EasfError> = std::result::Result<T, E>;

/// Per-patch event weight `W`; the frame weight is `1 - W`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub data: Field,
    pub threshold: f64,
}

/// `W = E_e / (E_e + E_f)` where `E_e + E_f >= T`, otherwise exactly 0.5.
pub fn weight_map(event: &EntropyMap, frame: &EntropyMap, threshold: f64) -> Result<WeightMap> {
    if !(threshold > 0.0 && threshold <= 2.0) {
        return Err(EasfError::BadThreshold(threshold));
    }
    let (ee, ef) = (&event.data, &frame.data);
    if ee.shape() != ef.shape() {
        return Err(EasfError::ShapeMismatch(
            vec![ee.height(), ee.width()],
            vec![ef.height(), ef.width()],
        ));
    }
    let data = ee
        .data()
        .iter()
        .zip(ef.data())
        .map(|(&e, &f)| {
            let total = e + f;
            if total >= threshold {
                e / total
            } else {
                0.5
            }
        })
        .collect();
    let data = Field::new(ee.height(), ee.width(), data).expect("same shape as inputs");
    Ok(WeightMap { data, threshold })
}
