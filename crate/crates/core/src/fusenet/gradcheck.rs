//! Central finite-difference checks for every differentiable piece: the
//! layer substrate, the training losses and the assembled network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::{attention, conv2d, layernorm, linear, relu, softplus, upsample};
use super::losses::{pretrain_loss, scale_invariant_loss};
use super::model::{self, ArchDescriptor, ModelParams, OutputGrads};
use crate::easf::{spatial_loss, WeightMap};
use crate::imagery::Field;
use crate::mgtc::{contrastive_loss, ContrastiveBatch, Label};
use crate::tensor::Tensor;

/// Relative-error bound for component checks.
pub const TOLERANCE: f64 = 1e-4;
/// Bound for the whole-network directional check.
pub const NETWORK_TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn random(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| scale * rng.random_range(-1.0..1.0))
}

#[derive(Default)]
struct Acc {
    worst: f64,
    checked: usize,
}

impl Acc {
    /// Compares `analytic` with the central difference of scalar `f` at `x`,
    /// element by element.
    fn check(&mut self, x: &Tensor, analytic: &Tensor, f: impl Fn(&Tensor) -> f64) {
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += STEP;
            let mut m = x.clone();
            m.data_mut()[i] -= STEP;
            let fd = (f(&p) - f(&m)) / (2.0 * STEP);
            self.worst = self.worst.max(rel(analytic.data()[i], fd));
            self.checked += 1;
        }
    }

    fn finish(self, name: &'static str, trials: usize, tolerance: f64) -> SuiteResult {
        let passed = self.worst.is_finite() && self.worst <= tolerance && self.checked > 0;
        SuiteResult { name, trials, checked: self.checked, max_rel_error: self.worst, tolerance, passed }
    }
}

fn suite(name: &'static str, seed: u64, trials: usize, mut trial: impl FnMut(&mut ChaCha8Rng, &mut Acc)) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, name));
    let mut acc = Acc::default();
    for _ in 0..trials {
        trial(&mut rng, &mut acc);
    }
    acc.finish(name, trials, TOLERANCE)
}

pub fn conv2d_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("conv2d", seed, trials, |rng, acc| {
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let (h, w, s) = (rng.random_range(2..8), rng.random_range(2..8), rng.random_range(1..3));
        let x = random(rng, &[ci, h, w], 1.0);
        let wt = random(rng, &[co, ci, 3, 3], 1.0);
        let b = random(rng, &[co], 1.0);
        let probe = random(rng, &[co, conv2d::output_size(h, 3, s), conv2d::output_size(w, 3, s)], 1.0);
        let g = conv2d::backward(&x, &wt, s, &probe, true);
        acc.check(&x, g.input.as_ref().expect("requested"), |x| conv2d::forward(x, &wt, &b, s).dot(&probe));
        acc.check(&wt, &g.weight, |wt| conv2d::forward(&x, wt, &b, s).dot(&probe));
        acc.check(&b, &g.bias, |b| conv2d::forward(&x, &wt, b, s).dot(&probe));
    })
}

pub fn relu_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("relu", seed, trials, |rng, acc| {
        let shape = [rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..6)];
        // Keep inputs off the kink so the central difference is well defined.
        let x = random(rng, &shape, 1.0).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
        let probe = random(rng, &shape, 1.0);
        acc.check(&x, &relu::backward(&x, &probe), |x| relu::forward(x).dot(&probe));
    })
}

pub fn softplus_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("softplus", seed, trials, |rng, acc| {
        let shape = [rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..6)];
        let x = random(rng, &shape, 6.0);
        let probe = random(rng, &shape, 1.0);
        acc.check(&x, &softplus::backward(&x, &probe), |x| softplus::forward(x).dot(&probe));
    })
}

pub fn layernorm_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("layernorm", seed, trials, |rng, acc| {
        let (n, d) = (rng.random_range(1..6), rng.random_range(2..8));
        let x = random(rng, &[n, d], 2.0);
        let gamma = random(rng, &[d], 1.0);
        let beta = random(rng, &[d], 1.0);
        let probe = random(rng, &[n, d], 1.0);
        let (_, cache) = layernorm::forward(&x, &gamma, &beta);
        let (gx, gg, gb) = layernorm::backward(&cache, &gamma, &probe);
        acc.check(&x, &gx, |x| layernorm::forward(x, &gamma, &beta).0.dot(&probe));
        acc.check(&gamma, &gg, |g| layernorm::forward(&x, g, &beta).0.dot(&probe));
        acc.check(&beta, &gb, |b| layernorm::forward(&x, &gamma, b).0.dot(&probe));
    })
}

pub fn linear_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("linear", seed, trials, |rng, acc| {
        let (n, di, dout) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
        let x = random(rng, &[n, di], 1.0);
        let w = random(rng, &[dout, di], 1.0);
        let b = random(rng, &[dout], 1.0);
        let probe = random(rng, &[n, dout], 1.0);
        let (gx, gw, gb) = linear::backward(&x, &w, &probe);
        acc.check(&x, &gx, |x| linear::forward(x, &w, &b).dot(&probe));
        acc.check(&w, &gw, |w| linear::forward(&x, w, &b).dot(&probe));
        acc.check(&b, &gb, |b| linear::forward(&x, &w, b).dot(&probe));
    })
}

pub fn attention_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("attention", seed, trials, |rng, acc| {
        let (nq, nk, d, dv) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..5));
        let q = random(rng, &[nq, d], 2.0);
        let k = random(rng, &[nk, d], 2.0);
        let v = random(rng, &[nk, dv], 1.0);
        let probe = random(rng, &[nq, dv], 1.0);
        let (_, a) = attention::forward(&q, &k, &v);
        let (gq, gk, gv) = attention::backward(&q, &k, &v, &a, &probe);
        acc.check(&q, &gq, |q| attention::forward(q, &k, &v).0.dot(&probe));
        acc.check(&k, &gk, |k| attention::forward(&q, k, &v).0.dot(&probe));
        acc.check(&v, &gv, |v| attention::forward(&q, &k, v).0.dot(&probe));
    })
}

pub fn upsample_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("upsample", seed, trials, |rng, acc| {
        let shape = [rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..6)];
        let x = random(rng, &shape, 1.0);
        let probe = random(rng, &[shape[0], 2 * shape[1], 2 * shape[2]], 1.0);
        acc.check(&x, &upsample::backward(&shape, &probe), |x| upsample::forward(x).dot(&probe));
    })
}

pub fn spatial_loss_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("spatial_loss", seed, trials, |rng, acc| {
        let (c, h, w) = (rng.random_range(2..6), rng.random_range(1..5), rng.random_range(1..5));
        let fused = random(rng, &[c, h, w], 1.0);
        let event = random(rng, &[c, h, w], 1.0);
        let frame = random(rng, &[c, h, w], 1.0);
        let wm = WeightMap { data: Field::from_fn(h, w, |_, _| rng.random_range(0.0..1.0)), threshold: 0.3 };
        let l = spatial_loss(&fused, &event, &frame, &wm).expect("random features are non-zero");
        acc.check(&fused, &l.grad_fused, |f| spatial_loss(f, &event, &frame, &wm).expect("non-zero").loss);
    })
}

pub fn contrastive_loss_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("contrastive_loss", seed, trials, |rng, acc| {
        let (dim, n) = (rng.random_range(2..6), rng.random_range(4..10));
        let mut labels = vec![Label::Foreground, Label::Foreground, Label::Background, Label::Background];
        labels.extend((4..n).map(|_| if rng.random_bool(0.5) { Label::Foreground } else { Label::Background }));
        let tau = rng.random_range(0.1..1.0);
        // Features laid out as a `dim × 1 × n` map, one column per sample.
        let x = random(rng, &[dim, 1, n], 1.0);
        let rows = |x: &Tensor| -> Vec<Vec<f64>> { (0..n).map(|i| (0..dim).map(|k| x.data()[k * n + i]).collect()).collect() };
        let f = |x: &Tensor| {
            let b = ContrastiveBatch::from_rows(&rows(x), labels.clone(), tau).expect("valid rows");
            contrastive_loss(&b).expect("every class has a positive").loss
        };
        let batch = ContrastiveBatch::from_rows(&rows(&x), labels.clone(), tau).expect("valid rows");
        let l = contrastive_loss(&batch).expect("every class has a positive");
        let mut g = Tensor::zeros(&[dim, 1, n]);
        batch.scatter_gradient(&l.grad, &mut g);
        acc.check(&x, &g, f);
    })
}

pub fn scale_invariant_loss_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("scale_invariant_loss", seed, trials, |rng, acc| {
        let n = rng.random_range(2..16);
        let pred = Tensor::from_fn(&[n], |_| rng.random_range(0.2..8.0));
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..8.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i < 2 || rng.random_bool(0.8)).collect();
        let (_, g) = scale_invariant_loss(pred.data(), &gt, &mask).expect("positive inputs");
        let g = Tensor::new(vec![n], g).expect("same length");
        acc.check(&pred, &g, |p| scale_invariant_loss(p.data(), &gt, &mask).expect("positive").0);
    })
}

pub fn pretrain_loss_suite(seed: u64, trials: usize) -> SuiteResult {
    suite("pretrain_loss", seed, trials, |rng, acc| {
        let shape = [rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5)];
        let f = random(rng, &shape, 1.0);
        // Keep every element away from a tie.
        let e = Tensor::from_fn(&shape, |i| {
            let d: f64 = rng.random_range(0.01..1.0);
            f.data()[i] + if rng.random_bool(0.5) { d } else { -d }
        });
        let (_, g) = pretrain_loss(&f, &e).expect("same shape");
        acc.check(&e, &g, |e| pretrain_loss(&f, e).expect("same shape").0);
    })
}

/// Directional derivative of the assembled network on a 16×16 input against
/// a central difference along a random parameter direction.
pub fn network_suite(seed: u64, trials: usize) -> SuiteResult {
    let name = "network";
    let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, name));
    let mut acc = Acc::default();
    for trial in 0..trials {
        let mut params = ModelParams::init(ArchDescriptor::toy(2), seed.wrapping_add(trial as u64));
        // Make the adapter active and let every group train.
        params.adapter.value.weight = random(&mut rng, params.adapter.value.weight.shape(), 0.3);
        params.frozen.clear();
        let frame = random(&mut rng, &[1, 16, 16], 0.5).map(|v| v + 0.5);
        let events = random(&mut rng, &[2, 16, 16], 1.0);
        let (out, trace) = model::forward_traced(&params, &frame, &events, None);
        let p_depth = random(&mut rng, &[1, 16, 16], 1.0);
        let p_pen = random(&mut rng, out.penultimate.shape(), 1.0);
        let p_fused = random(&mut rng, out.fused.shape(), 1.0);
        let objective = |p: &ModelParams| {
            let (o, t) = model::forward_traced(p, &frame, &events, None);
            t.depth.dot(&p_depth) + o.penultimate.dot(&p_pen) + o.fused.dot(&p_fused)
        };
        let mut grads = params.zeros_like();
        let up = OutputGrads { depth: Some(p_depth.clone()), penultimate: Some(p_pen.clone()), fused: Some(p_fused.clone()), event_features: None };
        model::backward(&params, &trace, &up, &mut grads);
        let mut direction = params.zeros_like();
        direction.for_each_mut(|_, _, t| t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0)));
        let mut analytic = 0.0;
        let mut dirs = Vec::new();
        direction.for_each(|_, _, t| dirs.push(t.clone()));
        let mut i = 0;
        grads.for_each(|_, _, g| {
            analytic += g.dot(&dirs[i]);
            i += 1;
        });
        let shifted = |k: f64| {
            let mut p = params.clone();
            let mut j = 0;
            p.for_each_mut(|_, _, t| {
                t.add_scaled(&dirs[j], k);
                j += 1;
            });
            objective(&p)
        };
        let h = 1e-6;
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        acc.worst = acc.worst.max(rel(analytic, fd));
        acc.checked += 1;
    }
    acc.finish(name, trials, NETWORK_TOLERANCE)
}

/// Every suite with `trials` random trials each.
pub fn run_all(seed: u64, trials: usize) -> Vec<SuiteResult> {
    vec![
        conv2d_suite(seed, trials),
        relu_suite(seed, trials),
        softplus_suite(seed, trials),
        layernorm_suite(seed, trials),
        linear_suite(seed, trials),
        attention_suite(seed, trials),
        upsample_suite(seed, trials),
        spatial_loss_suite(seed, trials),
        contrastive_loss_suite(seed, trials),
        scale_invariant_loss_suite(seed, trials),
        pretrain_loss_suite(seed, trials),
        network_suite(seed, trials),
    ]
}
