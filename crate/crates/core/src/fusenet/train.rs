//! Two-step training: event-encoder pretraining against the frozen frame
//! features, then joint training of event encoder, adapter and decoder.
//! Also trains the frame-path stand-in on clean data before it is frozen.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{pretrain_loss, scale_invariant_loss, total_loss, LossComponents, LossWeights};
use super::model::{self, backward, encode, forward_traced, Group, ModelParams, OutputGrads};
use super::{FusenetError, Result};
use crate::easf::{self, patch_entropy_event, patch_entropy_frame, spatial_loss, EasfError, WeightMap};
use crate::evio::VoxelGrid;
use crate::imagery::{DepthMap, FlowField, Image};
use crate::mgtc::{self, contrastive_loss, localize_regions, sample_batch, MgtcError, RegionLabels};
use crate::rng::{derive_seed, substream};
use crate::tensor::Tensor;

/// One aligned training tuple.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub id: String,
    pub frame: Image,
    pub voxels: VoxelGrid,
    pub depth: DepthMap,
    pub flow: FlowField,
    /// Undegraded frame, when known. Step 1 fits the event encoder to the
    /// frame features of this frame instead of the degraded one.
    pub clean: Option<Image>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Step-1 epochs (event encoder only).
    pub pretrain_epochs: usize,
    /// Step-2 epochs.
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(rename = "lambdas")]
    pub weights: LossWeights,
    pub seed: u64,
    pub patch_size: usize,
    pub entropy_bins: usize,
    #[serde(rename = "T")]
    pub threshold: f64,
    pub tau: f64,
    pub timestamps: Vec<f64>,
    pub max_per_class: usize,
    /// Feed zeros instead of the voxel grids.
    pub zero_events: bool,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
            pretrain_epochs: 5,
            epochs: 50,
            batch_size: 4,
            weights: LossWeights::default(),
            seed: 0,
            patch_size: easf::DEFAULT_PATCH_SIZE,
            entropy_bins: easf::DEFAULT_ENTROPY_BINS,
            threshold: easf::DEFAULT_THRESHOLD,
            tau: mgtc::DEFAULT_TAU,
            timestamps: mgtc::DEFAULT_TIMESTAMPS.to_vec(),
            max_per_class: mgtc::DEFAULT_MAX_PER_CLASS,
            zero_events: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FusenetError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive".into());
        }
        self.weights.validate()
    }

    /// Stable hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::rng::content_hash(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Foundation,
    Pretrain,
    Train,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Foundation => "foundation",
            Phase::Pretrain => "pretrain",
            Phase::Train => "train",
        }
    }
}

/// One line of the metrics log. Component values are means over the
/// samples where the component was available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub loss: f64,
    pub gt: Option<f64>,
    pub spatial: Option<f64>,
    pub temporal: Option<f64>,
    pub spatial_skipped: usize,
    pub temporal_skipped: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
}

/// A sample with everything that does not change during training
/// precomputed: network inputs, cached frozen frame features, the entropy
/// weight map and the region labels.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub id: String,
    pub frame_input: Tensor,
    pub event_input: Tensor,
    pub frame_features: Tensor,
    /// Step-1 target: frame features of the clean frame when available.
    pub pretrain_target: Tensor,
    pub depth: DepthMap,
    pub weights: Option<WeightMap>,
    pub labels: Option<RegionLabels>,
}

impl PreparedSample {
    pub fn new(s: &TrainSample, params: &ModelParams, cfg: &TrainConfig) -> Result<Self> {
        let frame_input = model::frame_input(&s.frame);
        let event_input = if cfg.zero_events {
            Tensor::zeros(&[s.voxels.bins(), s.voxels.height(), s.voxels.width()])
        } else {
            model::event_input(&s.voxels)
        };
        let (frame_features, _) = encode(&params.frame_encoder, &frame_input);
        let pretrain_target = match &s.clean {
            Some(c) => encode(&params.frame_encoder, &model::frame_input(c)).0,
            None => frame_features.clone(),
        };
        let weights = if cfg.weights.spatial > 0.0 {
            let vox = if cfg.zero_events {
                VoxelGrid::zeros(s.voxels.bins(), s.voxels.height(), s.voxels.width())
            } else {
                s.voxels.clone()
            };
            let ee = patch_entropy_event(&vox, cfg.patch_size, cfg.entropy_bins)?;
            let ef = patch_entropy_frame(&s.frame, cfg.patch_size, cfg.entropy_bins)?;
            Some(easf::weight_map(&ee, &ef, cfg.threshold)?)
        } else {
            None
        };
        let labels = if cfg.weights.temporal > 0.0 {
            match mgtc::default_edge_threshold(&s.depth) {
                Some(thr) => match localize_regions(&s.depth, &s.flow, &cfg.timestamps, thr) {
                    Ok(l) => Some(l),
                    Err(MgtcError::EmptyEdges) => None,
                    Err(e) => return Err(e.into()),
                },
                None => None,
            }
        } else {
            None
        };
        Ok(Self { id: s.id.clone(), frame_input, event_input, frame_features, pretrain_target, depth: s.depth.clone(), weights, labels })
    }
}

/// Validates that all samples agree with each other and the architecture.
fn check_samples(samples: &[TrainSample], params: &ModelParams) -> Result<()> {
    let first = samples.first().ok_or_else(|| FusenetError::ManifestInvalid("no samples".into()))?;
    let (h, w) = first.frame.shape();
    let k = model::ArchDescriptor::DOWNSAMPLE;
    if h % k != 0 || w % k != 0 {
        return Err(FusenetError::ManifestInvalid(format!("{}: size {h}x{w} is not a multiple of {k}", first.id)));
    }
    for s in samples {
        let ok = s.frame.shape() == (h, w)
            && s.clean.as_ref().is_none_or(|c| c.shape() == (h, w))
            && s.depth.shape() == (h, w)
            && s.flow.shape() == (h, w)
            && (s.voxels.height(), s.voxels.width()) == (h, w)
            && s.voxels.bins() == params.arch.event_bins;
        if !ok {
            return Err(FusenetError::ManifestInvalid(format!("{}: inconsistent shapes", s.id)));
        }
    }
    Ok(())
}

/// SGD with momentum: `v ← μv + g`, `w ← w − lr·v`.
struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: ModelParams,
    clip: Option<f64>,
}

impl Sgd {
    fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Self { lr: cfg.lr, momentum: cfg.momentum, velocity: params.zeros_like(), clip: cfg.clip_norm }
    }

    /// Applies one update to every group in `trainable`; returns the
    /// (pre-clip) gradient norm.
    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, trainable: &[Group]) -> f64 {
        let flat = grads.tensors();
        let sq: f64 = flat
            .iter()
            .filter(|(_, g, _)| trainable.contains(g))
            .map(|(_, _, t)| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        let norm = sq.sqrt();
        let k = match self.clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (lr, mu) = (self.lr, self.momentum);
        for (((_, g, w), (_, _, v)), (_, _, grad)) in params.tensors_mut().into_iter().zip(self.velocity.tensors_mut()).zip(&flat) {
            if !trainable.contains(&g) {
                continue;
            }
            for ((wv, vv), gv) in w.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
                *vv = mu * *vv + k * gv;
                *wv = (*wv - lr * *vv) as f32 as f64;
            }
        }
        norm
    }
}

fn trainable_groups(params: &ModelParams, wanted: &[Group]) -> Vec<Group> {
    wanted.iter().copied().filter(|g| !params.is_frozen(*g)).collect()
}

#[derive(Default)]
struct EpochStats {
    loss: f64,
    gt: (f64, usize),
    spatial: (f64, usize),
    temporal: (f64, usize),
    spatial_skipped: usize,
    temporal_skipped: usize,
    grad_norm: f64,
    steps: usize,
}

impl EpochStats {
    fn record(&self, phase: Phase, epoch: usize, n: usize) -> EpochRecord {
        let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
        EpochRecord {
            phase,
            epoch,
            loss: self.loss / n as f64,
            gt: mean(self.gt),
            spatial: mean(self.spatial),
            temporal: mean(self.temporal),
            spatial_skipped: self.spatial_skipped,
            temporal_skipped: self.temporal_skipped,
            grad_norm: self.grad_norm / self.steps.max(1) as f64,
        }
    }
}

/// Runs `epochs` epochs of minibatch SGD. `sample_step` computes the loss
/// for one sample and accumulates its gradient.
fn run_epochs(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    n: usize,
    phase: Phase,
    epochs: usize,
    trainable: &[Group],
    log: &mut Vec<EpochRecord>,
    mut sample_step: impl FnMut(&ModelParams, usize, usize, &mut ModelParams, &mut EpochStats) -> Result<()>,
) -> Result<()> {
    let mut opt = Sgd::new(params, cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(cfg.seed, &format!("fusenet/shuffle/{}", phase.name()));
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut stats = EpochStats::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                sample_step(params, epoch, i, &mut grads, &mut stats)?;
            }
            grads.for_each_mut(|_, _, t| t.scale(1.0 / batch.len() as f64));
            stats.grad_norm += opt.step(params, &grads, trainable);
            stats.steps += 1;
        }
        if !stats.loss.is_finite() || !params.is_finite() {
            return Err(FusenetError::DivergedLoss {
                phase: phase.name(),
                epoch,
                detail: format!("mean loss {} after {} steps", stats.loss / n as f64, stats.steps),
            });
        }
        log.push(stats.record(phase, epoch, n));
    }
    Ok(())
}

fn diverged(phase: Phase, epoch: usize, id: &str, what: &str, v: f64) -> FusenetError {
    FusenetError::DivergedLoss { phase: phase.name(), epoch, detail: format!("sample {id}: {what} = {v}") }
}

/// Scale-invariant loss over the ground-truth mask. A prediction that is not
/// strictly positive there means training has blown up.
fn gt_loss(pred: &[f64], gt: &DepthMap, phase: Phase, epoch: usize, id: &str) -> Result<(f64, Vec<f64>)> {
    match scale_invariant_loss(pred, gt.depth().data(), gt.valid()) {
        Err(FusenetError::NonPositiveDepth { index, value }) if pred[index] == value || value.is_nan() => {
            Err(diverged(phase, epoch, id, &format!("predicted depth at {index}"), value))
        }
        r => r,
    }
}

/// Trains the frame encoder and decoder on clean frames with the
/// scale-invariant loss (adapter bypassed), then freezes the frame encoder.
pub fn train_foundation(samples: &[TrainSample], mut params: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_samples(samples, &params)?;
    params.frozen.clear();
    let inputs: Vec<Tensor> = samples.iter().map(|s| model::frame_input(&s.frame)).collect();
    let mut log = Vec::new();
    let trainable = [Group::FrameEncoder, Group::Decoder];
    run_epochs(&mut params, cfg, samples.len(), Phase::Foundation, cfg.epochs, &trainable, &mut log, |p, epoch, i, grads, st| {
        let (dec, et, dt) = model::forward_frame_traced(p, &inputs[i]);
        let (l, g) = gt_loss(dec.depth.data(), &samples[i].depth, Phase::Foundation, epoch, &samples[i].id)?;
        if !l.is_finite() {
            return Err(diverged(Phase::Foundation, epoch, &samples[i].id, "gt", l));
        }
        st.loss += l;
        st.gt.0 += l;
        st.gt.1 += 1;
        let gd = Tensor::new(dec.depth.shape().to_vec(), g).expect("depth grad");
        let gin = model::decode_backward(&p.decoder, &dt, Some(&gd), None, &mut grads.decoder, true).expect("requested");
        model::encode_backward(&p.frame_encoder, &et, &gin, &mut grads.frame_encoder);
        Ok(())
    })?;
    params.frozen = vec![Group::FrameEncoder];
    Ok(TrainOutcome { params, log })
}

/// Step 1: fits the event encoder to the frozen frame features.
pub fn pretrain_event_encoder(prepared: &[PreparedSample], params: &mut ModelParams, cfg: &TrainConfig, log: &mut Vec<EpochRecord>) -> Result<()> {
    let trainable = trainable_groups(params, &[Group::EventEncoder]);
    run_epochs(params, cfg, prepared.len(), Phase::Pretrain, cfg.pretrain_epochs, &trainable, log, |p, epoch, i, grads, st| {
        let s = &prepared[i];
        let (fe, trace) = encode(&p.event_encoder, &s.event_input);
        let (l, g) = pretrain_loss(&s.pretrain_target, &fe)?;
        if !l.is_finite() {
            return Err(diverged(Phase::Pretrain, epoch, &s.id, "pretrain", l));
        }
        st.loss += l;
        model::encode_backward(&p.event_encoder, &trace, &g, &mut grads.event_encoder);
        Ok(())
    })
}

/// Full two-step procedure starting from parameters whose frame encoder is
/// already trained and frozen.
/// Runs only step 1: event-encoder alignment against the frozen frame features.
pub fn pretrain(samples: &[TrainSample], params: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_samples(samples, &params)?;
    if !params.is_frozen(Group::FrameEncoder) {
        return Err(FusenetError::Config("the frame encoder must be frozen before training".into()));
    }
    let mut params = params;
    let prepared = samples.iter().map(|s| PreparedSample::new(s, &params, cfg)).collect::<Result<Vec<_>>>()?;
    let mut log = Vec::new();
    pretrain_event_encoder(&prepared, &mut params, cfg, &mut log)?;
    Ok(TrainOutcome { params, log })
}

pub fn train(samples: &[TrainSample], params: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_samples(samples, &params)?;
    if !params.is_frozen(Group::FrameEncoder) {
        return Err(FusenetError::Config("the frame encoder must be frozen before training".into()));
    }
    let mut params = params;
    let prepared = samples.iter().map(|s| PreparedSample::new(s, &params, cfg)).collect::<Result<Vec<_>>>()?;
    let mut log = Vec::new();
    pretrain_event_encoder(&prepared, &mut params, cfg, &mut log)?;

    let trainable = trainable_groups(&params, &[Group::EventEncoder, Group::Adapter, Group::Decoder]);
    let w = cfg.weights;
    run_epochs(&mut params, cfg, prepared.len(), Phase::Train, cfg.epochs, &trainable, &mut log, |p, epoch, i, grads, st| {
        let s = &prepared[i];
        let (out, trace) = forward_traced(p, &s.frame_input, &s.event_input, Some(&s.frame_features));
        let mut up = OutputGrads::default();
        let mut comp = LossComponents::default();

        let (lgt, g) = gt_loss(out.depth.depth().data(), &s.depth, Phase::Train, epoch, &s.id)?;
        comp.gt = lgt;
        st.gt.0 += lgt;
        st.gt.1 += 1;
        if w.gt > 0.0 {
            up.depth = Some(Tensor::new(trace.depth.shape().to_vec(), g.iter().map(|v| w.gt * v).collect()).expect("depth grad"));
        }

        if let Some(wm) = s.weights.as_ref() {
            match spatial_loss(&out.fused, &out.event_features, &out.frame_features, wm) {
                Ok(sp) => {
                    comp.spatial = sp.loss;
                    st.spatial.0 += sp.loss;
                    st.spatial.1 += 1;
                    let mut g = sp.grad_fused;
                    g.scale(w.spatial);
                    up.fused = Some(g);
                }
                Err(EasfError::ZeroNorm { .. }) => st.spatial_skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }

        if let Some(labels) = s.labels.as_ref() {
            let seed = derive_seed(cfg.seed, &format!("fusenet/contrastive/{epoch}/{i}"));
            match sample_batch(&out.penultimate, labels, cfg.max_per_class, seed, cfg.tau) {
                Ok(batch) => {
                    let cl = contrastive_loss(&batch)?;
                    comp.temporal = Some(cl.loss);
                    st.temporal.0 += cl.loss;
                    st.temporal.1 += 1;
                    let scaled: Vec<f64> = cl.grad.iter().map(|v| w.temporal * v).collect();
                    let mut g = Tensor::zeros_like(&out.penultimate);
                    batch.scatter_gradient(&scaled, &mut g);
                    up.penultimate = Some(g);
                }
                Err(MgtcError::ClassUnderflow { .. }) => st.temporal_skipped += 1,
                Err(e) => return Err(e.into()),
            }
        } else if w.temporal > 0.0 {
            st.temporal_skipped += 1;
        }

        let total = total_loss(&comp, &w).map_err(|_| diverged(Phase::Train, epoch, &s.id, "loss", f64::NAN))?;
        st.loss += total;
        backward(p, &trace, &up, grads);
        Ok(())
    })?;
    Ok(TrainOutcome { params, log })
}
