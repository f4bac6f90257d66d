//! Fusion network: frozen frame encoder, event encoder, cross-attention
//! adapter and depth decoder.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, attention, conv2d, layernorm, linear, relu, softplus, upsample};
use super::{FusenetError, Result};
use crate::evio::VoxelGrid;
use crate::imagery::{DepthMap, Field, Image};
use crate::rng::substream;
use crate::tensor::{FeatureMap, Tensor};

/// Shape of the network. Serialized next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub frame_channels: usize,
    pub event_bins: usize,
    /// Output widths of the three stride-2 encoder blocks.
    pub encoder_channels: [usize; 3],
    /// Output widths of the first two decoder blocks; the last is 1.
    pub decoder_channels: [usize; 2],
    pub attention_dim: usize,
    pub heads: usize,
    pub kernel: usize,
}

impl ArchDescriptor {
    pub fn toy(event_bins: usize) -> Self {
        Self {
            frame_channels: 1,
            event_bins,
            encoder_channels: [8, 16, 32],
            decoder_channels: [16, 8],
            attention_dim: 32,
            heads: 1,
            kernel: 3,
        }
    }

    /// Input sizes must survive three halvings.
    pub const DOWNSAMPLE: usize = 8;
}

/// Parameter groups; the training procedure freezes whole groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    FrameEncoder,
    EventEncoder,
    Adapter,
    Decoder,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::FrameEncoder, Group::EventEncoder, Group::Adapter, Group::Decoder];
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adapter {
    pub norm_q: Norm,
    pub norm_k: Norm,
    pub query: Dense,
    pub key: Dense,
    /// Zero-initialized so the adapter starts as the identity.
    pub value: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: ArchDescriptor,
    pub seed: u64,
    pub frame_encoder: [Conv; 3],
    pub event_encoder: [Conv; 3],
    pub adapter: Adapter,
    pub decoder: [Conv; 3],
    pub frozen: Vec<Group>,
}

fn he(rng: &mut impl Rng, c_out: usize, c_in: usize, k: usize, gain: f64) -> Tensor {
    let std = gain * (1.0 / (c_in * k * k) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(&[c_out, c_in, k, k], |_| dist.sample(rng))
}

fn encoder(rng: &mut impl Rng, c_in: usize, widths: [usize; 3], k: usize) -> [Conv; 3] {
    let ins = [c_in, widths[0], widths[1]];
    std::array::from_fn(|i| {
        let last = i == 2;
        let weight = he(rng, widths[i], ins[i], k, if last { 1.0 } else { 2f64.sqrt() });
        // A small random bias on the last block keeps features away from the
        // origin on inputs that carry no signal.
        let bias = if last {
            let d = Normal::new(0.0, 0.1).expect("positive std");
            Tensor::from_fn(&[widths[i]], |_| d.sample(rng))
        } else {
            Tensor::zeros(&[widths[i]])
        };
        Conv { weight, bias }
    })
}

/// Bias making `softplus(bias) = 1`.
pub const UNIT_DEPTH_BIAS: f64 = 0.541_324_854_612_918_1;

impl ModelParams {
    /// Fresh parameters; every group draws from its own named stream.
    pub fn init(arch: ArchDescriptor, seed: u64) -> Self {
        let k = arch.kernel;
        let frame_encoder = encoder(&mut substream(seed, "fusenet/frame_encoder"), arch.frame_channels, arch.encoder_channels, k);
        let event_encoder = encoder(&mut substream(seed, "fusenet/event_encoder"), arch.event_bins, arch.encoder_channels, k);
        let d = arch.attention_dim;
        let c = arch.encoder_channels[2];
        let mut rng = substream(seed, "fusenet/adapter");
        let noise = Normal::new(0.0, 0.1 / (d as f64).sqrt()).expect("positive std");
        // Q/K start near a scaled identity so positional terms dominate the
        // initial attention pattern.
        let near_identity = |rng: &mut crate::rng::StreamRng| {
            Tensor::from_fn(&[d, c], |i| noise.sample(rng) + if i / c == i % c { 1.5 } else { 0.0 })
        };
        let query = Dense { weight: near_identity(&mut rng), bias: Tensor::zeros(&[d]) };
        let key = Dense { weight: near_identity(&mut rng), bias: Tensor::zeros(&[d]) };
        let unit = || Norm { gamma: Tensor::from_fn(&[c], |_| 1.0), beta: Tensor::zeros(&[c]) };
        let adapter = Adapter {
            norm_q: unit(),
            norm_k: unit(),
            query,
            key,
            value: Dense { weight: Tensor::zeros(&[c, c]), bias: Tensor::zeros(&[c]) },
        };
        let mut rng = substream(seed, "fusenet/decoder");
        let [d0, d1] = arch.decoder_channels;
        let decoder = [
            Conv { weight: he(&mut rng, d0, c, k, 2f64.sqrt()), bias: Tensor::zeros(&[d0]) },
            Conv { weight: he(&mut rng, d1, d0, k, 2f64.sqrt()), bias: Tensor::zeros(&[d1]) },
            Conv { weight: he(&mut rng, 1, d1, k, 0.1), bias: Tensor::from_fn(&[1], |_| UNIT_DEPTH_BIAS) },
        ];
        Self { arch, seed, frame_encoder, event_encoder, adapter, decoder, frozen: vec![Group::FrameEncoder] }
    }

    pub fn is_frozen(&self, g: Group) -> bool {
        self.frozen.contains(&g)
    }

    /// Same structure, every tensor zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, _, t| t.scale(0.0));
        z
    }

    /// Every tensor with its stable name and group, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Group, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, g, blocks) in [
            ("frame_encoder", Group::FrameEncoder, &self.frame_encoder),
            ("event_encoder", Group::EventEncoder, &self.event_encoder),
        ] {
            for (i, b) in blocks.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), g, &b.weight));
                out.push((format!("{prefix}.{i}.bias"), g, &b.bias));
            }
        }
        let a = &self.adapter;
        for (name, t) in [
            ("norm_q.gamma", &a.norm_q.gamma),
            ("norm_q.beta", &a.norm_q.beta),
            ("norm_k.gamma", &a.norm_k.gamma),
            ("norm_k.beta", &a.norm_k.beta),
            ("query.weight", &a.query.weight),
            ("query.bias", &a.query.bias),
            ("key.weight", &a.key.weight),
            ("key.bias", &a.key.bias),
            ("value.weight", &a.value.weight),
            ("value.bias", &a.value.bias),
        ] {
            out.push((format!("adapter.{name}"), Group::Adapter, t));
        }
        for (i, b) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.weight"), Group::Decoder, &b.weight));
            out.push((format!("decoder.{i}.bias"), Group::Decoder, &b.bias));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, Group, &mut Tensor)> {
        let mut out = Vec::new();
        for (prefix, g, blocks) in [
            ("frame_encoder", Group::FrameEncoder, &mut self.frame_encoder),
            ("event_encoder", Group::EventEncoder, &mut self.event_encoder),
        ] {
            for (i, b) in blocks.iter_mut().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), g, &mut b.weight));
                out.push((format!("{prefix}.{i}.bias"), g, &mut b.bias));
            }
        }
        let a = &mut self.adapter;
        for (name, t) in [
            ("norm_q.gamma", &mut a.norm_q.gamma),
            ("norm_q.beta", &mut a.norm_q.beta),
            ("norm_k.gamma", &mut a.norm_k.gamma),
            ("norm_k.beta", &mut a.norm_k.beta),
            ("query.weight", &mut a.query.weight),
            ("query.bias", &mut a.query.bias),
            ("key.weight", &mut a.key.weight),
            ("key.bias", &mut a.key.bias),
            ("value.weight", &mut a.value.weight),
            ("value.bias", &mut a.value.bias),
        ] {
            out.push((format!("adapter.{name}"), Group::Adapter, t));
        }
        for (i, b) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{i}.weight"), Group::Decoder, &mut b.weight));
            out.push((format!("decoder.{i}.bias"), Group::Decoder, &mut b.bias));
        }
        out
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, Group, &Tensor)) {
        for (n, g, t) in self.tensors() {
            f(&n, g, t);
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, Group, &mut Tensor)) {
        for (n, g, t) in self.tensors_mut() {
            f(&n, g, t);
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, t| ok &= t.is_finite());
        ok
    }

    /// Rounds every tensor to `f32` precision, the storage format.
    pub fn round_to_storage(&mut self) {
        self.for_each_mut(|_, _, t| t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64));
    }
}

// ---------------------------------------------------------------------------
// Encoders

/// Activations kept for the encoder backward pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    /// Input to each block.
    inputs: [Tensor; 3],
    /// Pre-activations of the first two blocks.
    pre: [Tensor; 2],
}

pub fn encode(blocks: &[Conv; 3], input: &Tensor) -> (FeatureMap, EncoderTrace) {
    let z0 = conv2d::forward(input, &blocks[0].weight, &blocks[0].bias, 2);
    let a0 = relu::forward(&z0);
    let z1 = conv2d::forward(&a0, &blocks[1].weight, &blocks[1].bias, 2);
    let a1 = relu::forward(&z1);
    let out = conv2d::forward(&a1, &blocks[2].weight, &blocks[2].bias, 2);
    (out, EncoderTrace { inputs: [input.clone(), a0, a1], pre: [z0, z1] })
}

/// Accumulates parameter gradients into `grads`.
pub fn encode_backward(blocks: &[Conv; 3], trace: &EncoderTrace, grad_out: &Tensor, grads: &mut [Conv; 3]) {
    let mut g = grad_out.clone();
    for i in (0..3).rev() {
        let cg = conv2d::backward(&trace.inputs[i], &blocks[i].weight, 2, &g, i > 0);
        grads[i].weight.add_assign(&cg.weight);
        grads[i].bias.add_assign(&cg.bias);
        if i > 0 {
            g = relu::backward(&trace.pre[i - 1], &cg.input.expect("requested"));
        }
    }
}

// ---------------------------------------------------------------------------
// Adapter

/// Fixed 2-D sinusoidal code added to the query and key inputs so attention
/// can prefer spatially aligned tokens.
pub fn positional_encoding(h: usize, w: usize, d: usize) -> Tensor {
    let quarter = d / 4;
    Tensor::from_fn(&[h * w, d], |i| {
        let (tok, k) = (i / d, i % d);
        let (r, c) = ((tok / w) as f64, (tok % w) as f64);
        if k >= 4 * quarter {
            return 0.0;
        }
        let freq = std::f64::consts::PI * 2f64.powf(-((k / 4) as f64) / 2.0);
        match k % 4 {
            0 => (r * freq).sin(),
            1 => (r * freq).cos(),
            2 => (c * freq).sin(),
            _ => (c * freq).cos(),
        }
    })
}

#[derive(Clone, Debug)]
pub struct AdapterTrace {
    h: usize,
    w: usize,
    event_tokens: Tensor,
    norm_q: layernorm::NormCache,
    norm_k: layernorm::NormCache,
    q_in: Tensor,
    k_in: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Tensor,
}

/// `F_fused = F_f + attention(LN(F_f)+P, LN(F_e)+P, F_e)`.
pub fn adapt(p: &Adapter, frame: &FeatureMap, event: &FeatureMap) -> (FeatureMap, AdapterTrace) {
    let (_, h, w) = frame.dims3();
    let xf = layers::to_tokens(frame);
    let xe = layers::to_tokens(event);
    let pe = positional_encoding(h, w, xf.shape()[1]);
    let (mut q_in, norm_q) = layernorm::forward(&xf, &p.norm_q.gamma, &p.norm_q.beta);
    let (mut k_in, norm_k) = layernorm::forward(&xe, &p.norm_k.gamma, &p.norm_k.beta);
    q_in.add_assign(&pe);
    k_in.add_assign(&pe);
    let q = linear::forward(&q_in, &p.query.weight, &p.query.bias);
    let k = linear::forward(&k_in, &p.key.weight, &p.key.bias);
    let v = linear::forward(&xe, &p.value.weight, &p.value.bias);
    let (o, attn) = attention::forward(&q, &k, &v);
    let mut fused = frame.clone();
    fused.add_assign(&layers::from_tokens(&o, h, w));
    (fused, AdapterTrace { h, w, event_tokens: xe, norm_q, norm_k, q_in, k_in, q, k, v, attn })
}

/// Accumulates adapter parameter gradients and returns the gradients with
/// respect to `(event features, frame features)`.
pub fn adapt_backward(p: &Adapter, t: &AdapterTrace, grad_fused: &Tensor, grads: &mut Adapter) -> (Tensor, Tensor) {
    let go = layers::to_tokens(grad_fused);
    let (gq, gk, gv) = attention::backward(&t.q, &t.k, &t.v, &t.attn, &go);
    let (gxe_v, gwv, gbv) = linear::backward(&t.event_tokens, &p.value.weight, &gv);
    grads.value.weight.add_assign(&gwv);
    grads.value.bias.add_assign(&gbv);
    let (gq_in, gwq, gbq) = linear::backward(&t.q_in, &p.query.weight, &gq);
    grads.query.weight.add_assign(&gwq);
    grads.query.bias.add_assign(&gbq);
    let (gk_in, gwk, gbk) = linear::backward(&t.k_in, &p.key.weight, &gk);
    grads.key.weight.add_assign(&gwk);
    grads.key.bias.add_assign(&gbk);
    let (gxe_k, ggk, gbk2) = layernorm::backward(&t.norm_k, &p.norm_k.gamma, &gk_in);
    grads.norm_k.gamma.add_assign(&ggk);
    grads.norm_k.beta.add_assign(&gbk2);
    let (gxf, ggq, gbq2) = layernorm::backward(&t.norm_q, &p.norm_q.gamma, &gq_in);
    grads.norm_q.gamma.add_assign(&ggq);
    grads.norm_q.beta.add_assign(&gbq2);
    let mut gxe = gxe_v;
    gxe.add_assign(&gxe_k);
    let mut g_frame = grad_fused.clone();
    g_frame.add_assign(&layers::from_tokens(&gxf, t.h, t.w));
    (layers::from_tokens(&gxe, t.h, t.w), g_frame)
}

// ---------------------------------------------------------------------------
// Decoder

#[derive(Clone, Debug)]
pub struct DecoderTrace {
    /// Upsampled input of each block.
    up: [Tensor; 3],
    /// Pre-activations of each block.
    pre: [Tensor; 3],
}

/// Decoder outputs.
#[derive(Clone, Debug)]
pub struct Decoded {
    /// Pre-activation of the second block, where the contrastive loss acts.
    pub penultimate: FeatureMap,
    /// Positive depth, `1 × H × W`.
    pub depth: Tensor,
}

pub fn decode(blocks: &[Conv; 3], input: &FeatureMap) -> (Decoded, DecoderTrace) {
    let u0 = upsample::forward(input);
    let z0 = conv2d::forward(&u0, &blocks[0].weight, &blocks[0].bias, 1);
    let u1 = upsample::forward(&relu::forward(&z0));
    let z1 = conv2d::forward(&u1, &blocks[1].weight, &blocks[1].bias, 1);
    let u2 = upsample::forward(&relu::forward(&z1));
    let z2 = conv2d::forward(&u2, &blocks[2].weight, &blocks[2].bias, 1);
    let depth = softplus::forward(&z2);
    (Decoded { penultimate: z1.clone(), depth }, DecoderTrace { up: [u0, u1, u2], pre: [z0, z1, z2] })
}

/// Accumulates decoder gradients; returns the gradient at the decoder input
/// when `need_input` is set.
pub fn decode_backward(
    blocks: &[Conv; 3],
    t: &DecoderTrace,
    grad_depth: Option<&Tensor>,
    grad_penultimate: Option<&Tensor>,
    grads: &mut [Conv; 3],
    need_input: bool,
) -> Option<Tensor> {
    let mut g_pen = match grad_depth {
        Some(gd) => {
            let gz2 = softplus::backward(&t.pre[2], gd);
            let cg = conv2d::backward(&t.up[2], &blocks[2].weight, 1, &gz2, true);
            grads[2].weight.add_assign(&cg.weight);
            grads[2].bias.add_assign(&cg.bias);
            let ga = upsample::backward(t.pre[1].shape(), &cg.input.expect("requested"));
            relu::backward(&t.pre[1], &ga)
        }
        None => Tensor::zeros_like(&t.pre[1]),
    };
    if let Some(gp) = grad_penultimate {
        g_pen.add_assign(gp);
    }
    let cg = conv2d::backward(&t.up[1], &blocks[1].weight, 1, &g_pen, true);
    grads[1].weight.add_assign(&cg.weight);
    grads[1].bias.add_assign(&cg.bias);
    let ga = upsample::backward(t.pre[0].shape(), &cg.input.expect("requested"));
    let gz0 = relu::backward(&t.pre[0], &ga);
    let cg = conv2d::backward(&t.up[0], &blocks[0].weight, 1, &gz0, need_input);
    grads[0].weight.add_assign(&cg.weight);
    grads[0].bias.add_assign(&cg.bias);
    let in_shape = [t.up[0].shape()[0], t.up[0].shape()[1] / 2, t.up[0].shape()[2] / 2];
    cg.input.map(|gi| upsample::backward(&in_shape, &gi))
}

// ---------------------------------------------------------------------------
// Whole network

/// `1 × H × W` network input for a frame.
pub fn frame_input(frame: &Image) -> Tensor {
    let (h, w) = frame.shape();
    Tensor::new(vec![1, h, w], frame.data().to_vec()).expect("frame shape")
}

/// `B × H × W` network input for a voxel grid.
pub fn event_input(vox: &VoxelGrid) -> Tensor {
    Tensor::new(vec![vox.bins(), vox.height(), vox.width()], vox.data().to_vec()).expect("voxel shape")
}

fn check_inputs(params: &ModelParams, frame: &Image, vox: Option<&VoxelGrid>) -> Result<()> {
    let (h, w) = frame.shape();
    let k = ArchDescriptor::DOWNSAMPLE;
    if h % k != 0 || w % k != 0 || h == 0 || w == 0 {
        return Err(FusenetError::ShapeMismatch { expected: vec![k * (h / k).max(1), k * (w / k).max(1)], got: vec![h, w] });
    }
    if let Some(v) = vox {
        let expected = vec![params.arch.event_bins, h, w];
        let got = vec![v.bins(), v.height(), v.width()];
        if expected != got {
            return Err(FusenetError::ShapeMismatch { expected, got });
        }
    }
    Ok(())
}

pub fn depth_map(depth: &Tensor) -> DepthMap {
    let (_, h, w) = depth.dims3();
    DepthMap::new(Field::new(h, w, depth.data().to_vec()).expect("depth shape"))
}

#[derive(Clone, Debug)]
pub struct FuseOutput {
    pub frame_features: FeatureMap,
    pub event_features: FeatureMap,
    pub fused: FeatureMap,
    pub penultimate: FeatureMap,
    pub depth: DepthMap,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pub frame: Option<EncoderTrace>,
    pub event: EncoderTrace,
    pub adapter: AdapterTrace,
    pub decoder: DecoderTrace,
    pub depth: Tensor,
}

/// Forward pass from network inputs. When `frame_features` is given (the
/// frame encoder is frozen and its output cached) the frame encoder is
/// skipped.
pub fn forward_traced(
    params: &ModelParams,
    frame: &Tensor,
    events: &Tensor,
    frame_features: Option<&FeatureMap>,
) -> (FuseOutput, Trace) {
    let (ff, frame_trace) = match frame_features {
        Some(f) => (f.clone(), None),
        None => {
            let (f, t) = encode(&params.frame_encoder, frame);
            (f, Some(t))
        }
    };
    let (fe, event_trace) = encode(&params.event_encoder, events);
    let (fused, adapter_trace) = adapt(&params.adapter, &ff, &fe);
    let (dec, decoder_trace) = decode(&params.decoder, &fused);
    let out = FuseOutput {
        frame_features: ff,
        event_features: fe,
        fused,
        penultimate: dec.penultimate,
        depth: depth_map(&dec.depth),
    };
    let trace = Trace { frame: frame_trace, event: event_trace, adapter: adapter_trace, decoder: decoder_trace, depth: dec.depth };
    (out, trace)
}

/// Runs the full network on a frame and its voxel grid.
pub fn forward_fuse(frame: &Image, vox: &VoxelGrid, params: &ModelParams) -> Result<FuseOutput> {
    check_inputs(params, frame, Some(vox))?;
    Ok(forward_traced(params, &frame_input(frame), &event_input(vox), None).0)
}

/// The frame path alone: frame encoder straight into the decoder, adapter
/// bypassed. This is the frozen baseline prediction.
pub fn forward_frame_only(frame: &Image, params: &ModelParams) -> Result<DepthMap> {
    check_inputs(params, frame, None)?;
    let (ff, _) = encode(&params.frame_encoder, &frame_input(frame));
    let (dec, _) = decode(&params.decoder, &ff);
    Ok(depth_map(&dec.depth))
}

/// Upstream gradients entering the network at its named outputs.
#[derive(Clone, Debug, Default)]
pub struct OutputGrads {
    pub depth: Option<Tensor>,
    pub penultimate: Option<Tensor>,
    pub fused: Option<Tensor>,
    pub event_features: Option<Tensor>,
}

/// Accumulates parameter gradients for every non-frozen group into `grads`.
///
/// The frame encoder receives gradient only when it is not frozen and the
/// forward pass was traced through it.
pub fn backward(params: &ModelParams, trace: &Trace, upstream: &OutputGrads, grads: &mut ModelParams) {
    let train_frame = !params.is_frozen(Group::FrameEncoder) && trace.frame.is_some();
    let need_event = !params.is_frozen(Group::EventEncoder);
    let want_decoder_input = upstream.depth.is_some() || upstream.penultimate.is_some();
    let mut g_fused = if want_decoder_input {
        decode_backward(
            &params.decoder,
            &trace.decoder,
            upstream.depth.as_ref(),
            upstream.penultimate.as_ref(),
            &mut grads.decoder,
            true,
        )
        .expect("requested")
    } else {
        let c = trace.adapter.event_tokens.shape()[1];
        Tensor::zeros(&[c, trace.adapter.h, trace.adapter.w])
    };
    if let Some(gf) = &upstream.fused {
        g_fused.add_assign(gf);
    }
    let (mut g_event, g_frame) = adapt_backward(&params.adapter, &trace.adapter, &g_fused, &mut grads.adapter);
    if let Some(ge) = &upstream.event_features {
        g_event.add_assign(ge);
    }
    if need_event {
        encode_backward(&params.event_encoder, &trace.event, &g_event, &mut grads.event_encoder);
    }
    if train_frame {
        encode_backward(&params.frame_encoder, trace.frame.as_ref().expect("checked"), &g_frame, &mut grads.frame_encoder);
    }
}

/// Frame path with a trace, for training the frame encoder and decoder
/// without the adapter.
pub fn forward_frame_traced(params: &ModelParams, frame: &Tensor) -> (Decoded, EncoderTrace, DecoderTrace) {
    let (ff, et) = encode(&params.frame_encoder, frame);
    let (dec, dt) = decode(&params.decoder, &ff);
    (dec, et, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn inputs(seed: u64, h: usize, w: usize, bins: usize) -> (Image, VoxelGrid) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frame = Image::new(Field::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))).unwrap();
        let data = (0..bins * h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        (frame, VoxelGrid::from_data(bins, h, w, data).unwrap())
    }

    #[test]
    fn zero_value_projection_reproduces_frame_path() {
        let params = ModelParams::init(ArchDescriptor::toy(5), 9);
        for seed in 0..5 {
            let (frame, vox) = inputs(seed, 16, 24, 5);
            let fused = forward_fuse(&frame, &vox, &params).unwrap();
            let base = forward_frame_only(&frame, &params).unwrap();
            assert_eq!(fused.depth, base);
            assert_eq!(fused.fused, fused.frame_features);
        }
    }

    #[test]
    fn outputs_are_positive_and_deterministic() {
        let mut params = ModelParams::init(ArchDescriptor::toy(3), 4);
        params.adapter.value.weight = Tensor::from_fn(&[32, 32], |i| ((i % 7) as f64 - 3.0) * 0.05);
        let (frame, vox) = inputs(1, 16, 16, 3);
        let a = forward_fuse(&frame, &vox, &params).unwrap();
        let b = forward_fuse(&frame, &vox, &params).unwrap();
        assert_eq!(a.depth, b.depth);
        assert!(a.depth.depth().data().iter().all(|&d| d > 0.0));
        assert_ne!(a.fused, a.frame_features);
        assert_eq!(a.frame_features.shape(), &[32, 2, 2]);
        assert_eq!(a.penultimate.shape(), &[8, 8, 8]);
    }

    #[test]
    fn shape_errors() {
        let params = ModelParams::init(ArchDescriptor::toy(5), 0);
        let (frame, vox) = inputs(0, 16, 16, 4);
        assert!(matches!(forward_fuse(&frame, &vox, &params), Err(FusenetError::ShapeMismatch { .. })));
        let (frame, vox) = inputs(0, 12, 16, 5);
        assert!(matches!(forward_fuse(&frame, &vox, &params), Err(FusenetError::ShapeMismatch { .. })));
    }

    #[test]
    fn identical_keys_average_values() {
        let q = Tensor::from_fn(&[3, 2], |i| i as f64 - 2.5);
        let k = Tensor::from_fn(&[4, 2], |i| if i % 2 == 0 { 0.3 } else { -1.1 });
        let v = Tensor::from_fn(&[4, 2], |i| i as f64);
        let (o, _) = attention::forward(&q, &k, &v);
        for r in 0..3 {
            assert!((o.data()[r * 2] - 3.0).abs() < 1e-12);
            assert!((o.data()[r * 2 + 1] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_names_are_unique() {
        let p = ModelParams::init(ArchDescriptor::toy(5), 0);
        let mut names: Vec<String> = p.tensors().into_iter().map(|(n, _, _)| n).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(p.parameter_count() > 10_000);
    }
}
