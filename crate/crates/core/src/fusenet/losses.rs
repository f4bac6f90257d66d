use serde::{Deserialize, Serialize};

use super::{FusenetError, Result};
use crate::imagery::DepthMap;
use crate::tensor::{FeatureMap, Tensor};

/// Scale-invariant log-depth loss over `mask`:
/// `L = mean(d²) − mean(d)²` with `d = ln pred − ln gt`.
///
/// Returns the loss and its gradient with respect to `pred` (zero off-mask).
pub fn scale_invariant_loss(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(FusenetError::ShapeMismatch { expected: vec![gt.len()], got: vec![pred.len(), mask.len()] });
    }
    let mut d = vec![0.0; pred.len()];
    let mut n = 0usize;
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        for v in [pred[i], gt[i]] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FusenetError::NonPositiveDepth { index: i, value: v });
            }
        }
        d[i] = pred[i].ln() - gt[i].ln();
        n += 1;
    }
    if n < 2 {
        return Err(FusenetError::EmptyMask(n));
    }
    let nf = n as f64;
    let sum: f64 = d.iter().sum();
    let sq: f64 = d.iter().map(|v| v * v).sum();
    let loss = sq / nf - (sum / nf).powi(2);
    let grad = (0..pred.len())
        .map(|i| if mask[i] { 2.0 * (d[i] - sum / nf) / (nf * pred[i]) } else { 0.0 })
        .collect();
    Ok((loss, grad))
}

/// [`scale_invariant_loss`] on depth maps, over their shared valid mask.
pub fn scale_invariant_loss_maps(pred: &DepthMap, gt: &DepthMap) -> Result<(f64, Vec<f64>)> {
    if pred.shape() != gt.shape() {
        let (a, b) = (pred.shape(), gt.shape());
        return Err(FusenetError::ShapeMismatch { expected: vec![b.0, b.1], got: vec![a.0, a.1] });
    }
    let mask: Vec<bool> = pred.valid().iter().zip(gt.valid()).map(|(a, b)| *a && *b).collect();
    scale_invariant_loss(pred.depth().data(), gt.depth().data(), &mask)
}

/// Mean absolute difference; gradient is taken with respect to `event`,
/// with subgradient 0 at exact ties.
pub fn pretrain_loss(frame: &FeatureMap, event: &FeatureMap) -> Result<(f64, Tensor)> {
    if frame.shape() != event.shape() {
        return Err(FusenetError::ShapeMismatch { expected: frame.shape().to_vec(), got: event.shape().to_vec() });
    }
    let n = frame.len().max(1) as f64;
    let mut total = 0.0;
    let grad = Tensor::from_fn(frame.shape(), |i| {
        let diff = event.data()[i] - frame.data()[i];
        total += diff.abs();
        if diff > 0.0 {
            1.0 / n
        } else if diff < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    Ok((total / n, grad))
}

/// Weights of the three training loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gt: f64,
    pub spatial: f64,
    pub temporal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gt: 1.0, spatial: 0.2, temporal: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gt", self.gt), ("spatial", self.spatial), ("temporal", self.temporal)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FusenetError::Config(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Values of the individual terms for one sample. A missing temporal term
/// (too few labelled pixels) contributes nothing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub gt: f64,
    pub spatial: f64,
    pub temporal: Option<f64>,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("gt", Some(c.gt)), ("spatial", Some(c.spatial)), ("temporal", c.temporal)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(FusenetError::NonFinite(name));
        }
    }
    Ok(w.gt * c.gt + w.spatial * c.spatial + c.temporal.map_or(0.0, |t| w.temporal * t))
}
