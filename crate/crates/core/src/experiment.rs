//! Fixed scaled-down training protocols on synthetic scenes.
//!
//! These are shared by the command-line tool and the acceptance suite so that
//! both run exactly the same recipe.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::DegradeError;
use crate::evio::VoxelGrid;
use crate::fusenet::{
    forward_fuse, train, train_foundation, ArchDescriptor, FusenetError, LossWeights, ModelParams, TrainConfig,
    TrainOutcome, TrainSample,
};
use crate::metrics::{aggregate, evaluate, EvalOptions, EvalReport, MetricsError};
use crate::synth::{generate, Degradation, SceneConfig, SynthSample};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Fusenet(#[from] FusenetError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("metric `{0}` undefined on the evaluation set")]
    Undefined(&'static str),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// First scene index of every held-out test set.
pub const TEST_OFFSET: usize = 5000;

/// Recipe for the frozen frame-only stand-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoundationConfig {
    pub scene_seed: u64,
    pub init_seed: u64,
    pub train_seed: u64,
    pub scenes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
}

impl Default for FoundationConfig {
    fn default() -> Self {
        Self { scene_seed: 100, init_seed: 1, train_seed: 0, scenes: 128, epochs: 60, lr: 3e-2, batch_size: 8, clip_norm: 1.0 }
    }
}

/// Trains the stand-in on clean scenes and freezes its encoder.
pub fn foundation(cfg: &FoundationConfig, scene: &SceneConfig) -> Result<TrainOutcome> {
    let samples = samples_of(&generate(cfg.scene_seed, 0, cfg.scenes, scene, Degradation::Clean)?);
    let init = ModelParams::init(ArchDescriptor::toy(scene.bins), cfg.init_seed);
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.train_seed,
        clip_norm: Some(cfg.clip_norm),
        ..Default::default()
    };
    Ok(train_foundation(&samples, init, &tc)?)
}

/// Shared settings for the comparison runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub clip_norm: f64,
}

impl ProtocolConfig {
    pub fn event_benefit() -> Self {
        Self {
            train_samples: 128,
            test_samples: 32,
            epochs: 60,
            pretrain_epochs: 10,
            lr: 1e-2,
            batch_size: 4,
            patch_size: 8,
            clip_norm: 1.0,
        }
    }

    pub fn edge_benefit() -> Self {
        Self { train_samples: 64, epochs: 40, ..Self::event_benefit() }
    }

    fn train_config(&self, seed: u64, weights: LossWeights, zero_events: bool) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            pretrain_epochs: self.pretrain_epochs,
            batch_size: self.batch_size,
            patch_size: self.patch_size,
            clip_norm: Some(self.clip_norm),
            weights,
            zero_events,
            seed,
            ..Default::default()
        }
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self::event_benefit()
    }
}

fn samples_of(set: &[SynthSample]) -> Vec<TrainSample> {
    set.iter().map(|s| s.sample.clone()).collect()
}

/// Aggregated metrics of `params` over a synthetic set. With `zero_events` the
/// voxel input is replaced by zeros.
pub fn evaluate_set(params: &ModelParams, set: &[SynthSample], zero_events: bool) -> Result<EvalReport> {
    let mut reports = Vec::with_capacity(set.len());
    for s in set {
        let v = &s.sample.voxels;
        let zeros;
        let vox = if zero_events {
            zeros = VoxelGrid::zeros(v.bins(), v.height(), v.width());
            &zeros
        } else {
            v
        };
        let pred = forward_fuse(&s.sample.frame, vox, params)?.depth;
        reports.push(evaluate(&pred, &s.sample.depth, &s.partition, &EvalOptions::default())?);
    }
    Ok(aggregate(&reports))
}

#[derive(Debug, Clone, Serialize)]
pub struct EventBenefit {
    pub seed: u64,
    pub frame_only: EvalReport,
    pub fused: EvalReport,
    /// Relative AbsRel reduction on extreme-illumination regions.
    pub extreme_gain: f64,
    /// Relative AbsRel change on normal regions; positive is worse.
    pub normal_change: f64,
}

impl EventBenefit {
    pub fn passed(&self) -> bool {
        self.extreme_gain >= 0.10 && self.normal_change <= 0.02
    }
}

/// Frame-only training (zero voxels, ground-truth loss only) against the full
/// objective with events, on blurred and illumination-degraded scenes.
pub fn event_benefit(foundation: &ModelParams, seed: u64, cfg: &ProtocolConfig, scene: &SceneConfig) -> Result<EventBenefit> {
    let kind = Degradation::BlurAndIllumination;
    let train_set = samples_of(&generate(seed, 0, cfg.train_samples, scene, kind)?);
    let test = generate(seed, TEST_OFFSET, cfg.test_samples, scene, kind)?;

    let gt_only = LossWeights { gt: 1.0, spatial: 0.0, temporal: 0.0 };
    let base = train(&train_set, foundation.clone(), &cfg.train_config(seed, gt_only, true))?;
    let full = train(&train_set, foundation.clone(), &cfg.train_config(seed, LossWeights::default(), false))?;
    let frame_only = evaluate_set(&base.params, &test, true)?;
    let fused = evaluate_set(&full.params, &test, false)?;

    let absrel = |r: &EvalReport, extreme: bool, name| {
        let m = if extreme { r.extreme } else { r.normal };
        m.map(|m| m.absrel).ok_or(ExperimentError::Undefined(name))
    };
    let extreme_gain = 1.0 - absrel(&fused, true, "extreme absrel")? / absrel(&frame_only, true, "extreme absrel")?;
    let normal_change = absrel(&fused, false, "normal absrel")? / absrel(&frame_only, false, "normal absrel")? - 1.0;
    Ok(EventBenefit { seed, frame_only, fused, extreme_gain, normal_change })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeRun {
    pub seed: u64,
    pub ege_without: f64,
    pub ege_with: f64,
}

impl EdgeRun {
    pub fn gain(&self) -> f64 {
        1.0 - self.ege_with / self.ege_without
    }
}

/// One seed of the temporal-term comparison on motion-blurred scenes:
/// default weights with `temporal_weight` against the same run with it at zero.
pub fn edge_run(foundation: &ModelParams, seed: u64, temporal_weight: f64, cfg: &ProtocolConfig, scene: &SceneConfig) -> Result<EdgeRun> {
    let kind = Degradation::Blur;
    let train_set = samples_of(&generate(seed, 0, cfg.train_samples, scene, kind)?);
    let test = generate(seed, TEST_OFFSET, cfg.test_samples, scene, kind)?;
    let mut ege = [0.0; 2];
    for (slot, temporal) in ege.iter_mut().zip([0.0, temporal_weight]) {
        let w = LossWeights { temporal, ..Default::default() };
        let out = train(&train_set, foundation.clone(), &cfg.train_config(seed, w, false))?;
        *slot = evaluate_set(&out.params, &test, false)?.ege.ok_or(ExperimentError::Undefined("ege"))?;
    }
    Ok(EdgeRun { seed, ege_without: ege[0], ege_with: ege[1] })
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeBenefit {
    pub runs: Vec<EdgeRun>,
    pub median_gain: f64,
    pub median_ege_without: f64,
    pub median_ege_with: f64,
}

impl EdgeBenefit {
    pub fn from_runs(runs: Vec<EdgeRun>) -> Self {
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n == 0 {
                f64::NAN
            } else if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        };
        Self {
            median_gain: median(runs.iter().map(EdgeRun::gain).collect()),
            median_ege_without: median(runs.iter().map(|r| r.ege_without).collect()),
            median_ege_with: median(runs.iter().map(|r| r.ege_with).collect()),
            runs,
        }
    }

    pub fn passed(&self) -> bool {
        self.median_ege_with <= self.median_ege_without && self.median_gain >= 0.03
    }
}

pub fn edge_benefit(foundation: &ModelParams, seeds: &[u64], cfg: &ProtocolConfig, scene: &SceneConfig) -> Result<EdgeBenefit> {
    let runs = seeds
        .iter()
        .map(|&s| edge_run(foundation, s, 0.1, cfg, scene))
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgeBenefit::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_summary() {
        let runs = [(0.8, 0.76), (1.0, 1.0), (0.5, 0.45)]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| EdgeRun { seed: i as u64, ege_without: a, ege_with: b })
            .collect();
        let e = EdgeBenefit::from_runs(runs);
        assert!((e.median_gain - 0.05).abs() < 1e-12);
        assert_eq!(e.median_ege_without, 0.8);
        assert!(e.passed());
    }

    #[test]
    fn configs_round_trip() {
        let c = ProtocolConfig::edge_benefit();
        let back: ProtocolConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let f: FoundationConfig = serde_json::from_str("{\"epochs\": 3}").unwrap();
        assert_eq!(f.epochs, 3);
        assert_eq!(f.scenes, 128);
    }
}
