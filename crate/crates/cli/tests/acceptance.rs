//! Acceptance criteria 1-10. Each test prints one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use evdepth::degrade::{make_degraded_pair, stretch_illumination, DegradeRecipe, RegionPartition};
use evdepth::easf::{self, spatial_loss, weight_map, EntropyMap, EntropySource, WeightMap};
use evdepth::evio::{self, Event, EventStream, Polarity, VoxelGrid};
use evdepth::experiment::{self, ProtocolConfig};
use evdepth::fusenet::{
    self, checkpoint, forward_frame_only, forward_fuse, gradcheck, scale_invariant_loss_maps, ArchDescriptor,
    ModelParams, TrainConfig,
};
use evdepth::imagery::{DepthMap, Field, Image};
use evdepth::metrics;
use evdepth::mgtc::{contrastive_loss, ContrastiveBatch, Label};
use evdepth::rng::substream;
use evdepth::synth::{generate, Degradation, SceneConfig};
use evdepth::tensor::Tensor;

fn verdict(n: u32, name: &str, passed: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} | {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {n} ({name}) failed: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn random_stream(rng: &mut impl Rng, n: usize, side: u32) -> EventStream {
    let t0: u64 = rng.random_range(0..1_000_000);
    let span: u64 = rng.random_range(0..5_000);
    let events = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(t0 + rng.random_range(0..=span), rng.random_range(0..side) as u16, rng.random_range(0..side) as u16, p)
        })
        .collect();
    EventStream::from_unsorted(side, side, events).unwrap()
}

/// Literal evaluation of the bilinear temporal kernel over every (event, bin) pair.
fn voxel_oracle(stream: &EventStream, bins: usize) -> Vec<f64> {
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let ev = stream.events();
    let mut grid = vec![0.0; bins * h * w];
    if ev.is_empty() {
        return grid;
    }
    let (t1, tn) = (ev[0].t as f64, ev[ev.len() - 1].t as f64);
    for b in 0..bins {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for e in ev {
                    if e.x as usize != x || e.y as usize != y {
                        continue;
                    }
                    let ts = if tn > t1 { (bins as f64 - 1.0) * (e.t as f64 - t1) / (tn - t1) } else { 0.0 };
                    acc += e.p.sign() as f64 * (1.0 - (b as f64 - ts).abs()).max(0.0);
                }
                grid[(b * h + y) * w + x] = acc;
            }
        }
    }
    grid
}

#[test]
fn criterion_01_voxel_grid_matches_literal_oracle() {
    let start = Instant::now();
    let mut rng = substream(1, "acceptance/voxel");
    let (mut worst, mut mass_ok) = (0.0f64, true);
    for _ in 0..500 {
        let n = rng.random_range(0..=200);
        let bins = rng.random_range(1..=8);
        let s = random_stream(&mut rng, n, 16);
        let grid = evio::voxelize(&s, bins).unwrap();
        let oracle = voxel_oracle(&s, bins);
        for (a, b) in grid.data().iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        mass_ok &= grid.sum() == s.polarity_sum() as f64;
    }
    let elapsed = start.elapsed();
    let passed = worst <= 1e-6 && mass_ok && elapsed < Duration::from_secs(5);
    verdict(1, "voxelization", passed, format!("500 streams, max |diff| {worst:.2e} (tol 1e-6), exact mass {mass_ok}, {}", secs(elapsed)));
}

#[test]
fn criterion_02_gradient_suites() {
    let start = Instant::now();
    let results = gradcheck::run_all(7, 20);
    let elapsed = start.elapsed();
    for s in &results {
        println!("    {:<22} trials {:>3} max rel {:.2e} tol {:.0e} {}", s.name, s.trials, s.max_rel_error, s.tolerance, s.passed);
    }
    let names = ["spatial_loss", "contrastive_loss", "scale_invariant_loss", "pretrain_loss"];
    let covered = names.iter().all(|n| results.iter().any(|s| s.name == *n));
    let worst = results.iter().map(|s| s.max_rel_error).fold(0.0, f64::max);
    let passed = covered
        && results.iter().all(|s| s.passed && s.trials >= 20)
        && results.iter().filter(|s| s.name != "network").all(|s| s.tolerance <= 1e-4)
        && elapsed < Duration::from_secs(60);
    verdict(2, "gradient checks", passed, format!("{} suites, max rel err {worst:.2e}, {}", results.len(), secs(elapsed)));
}

#[test]
fn criterion_03_closed_form_losses() {
    let mut rng = substream(3, "acceptance/closed");
    let (c, h, w) = (6, 4, 5);
    let fused = Tensor::from_fn(&[c, h, w], |_| rng.random_range(-1.0..1.0));
    let shared = Tensor::from_fn(&[c, h, w], |_| rng.random_range(-1.0..1.0));
    let half = WeightMap { data: Field::filled(h, w, 0.5), threshold: easf::DEFAULT_THRESHOLD };
    let ls = spatial_loss(&fused, &shared, &shared, &half).unwrap().loss;
    let e_s = (ls - std::f64::consts::LN_2).abs();

    let row: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let other: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = ContrastiveBatch::from_rows(&[row, other], vec![Label::Foreground, Label::Foreground], 0.07).unwrap();
    let e_t = contrastive_loss(&batch).unwrap().loss.abs();

    let gt = DepthMap::new(Field::from_fn(8, 8, |y, x| 1.0 + (y * 8 + x) as f64 * 0.37));
    let e_gt = [0.1, 1.0, 10.0]
        .iter()
        .map(|&k| scale_invariant_loss_maps(&gt.scaled(k), &gt).unwrap().0.abs())
        .fold(0.0, f64::max);
    let passed = e_s <= 1e-9 && e_t <= 1e-9 && e_gt <= 1e-9;
    verdict(3, "closed-form losses", passed, format!("|L_s - ln2| {e_s:.1e}, |L_t| {e_t:.1e}, max |L_gt(cD, D)| {e_gt:.1e} (tol 1e-9)"));
}

fn entropy_cell(v: f64) -> EntropyMap {
    EntropyMap { data: Field::filled(1, 1, v), patch_size: 1, source: EntropySource::Frame }
}

fn weight(e: f64, f: f64, t: f64) -> f64 {
    weight_map(&entropy_cell(e), &entropy_cell(f), t).unwrap().data.data()[0]
}

#[test]
fn criterion_04_weight_map_law() {
    let mut rng = substream(4, "acceptance/weights");
    let (mut branch, mut mono, mut swap) = (0usize, 0usize, 0usize);
    for _ in 0..10_000 {
        let (e, f) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let t = rng.random_range(1e-3..=2.0);
        let wv = weight(e, f, t);
        let expected = if e + f >= t { e / (e + f) } else { 0.5 };
        branch += (wv != expected) as usize;
        let bigger = (e + rng.random_range(0.0..=1.0 - e)).min(1.0);
        if e + f >= t {
            mono += (weight(bigger, f, t) < wv) as usize;
        }
        swap += ((wv + weight(f, e, t) - 1.0).abs() > 1e-15) as usize;
    }
    let passed = branch == 0 && mono == 0 && swap == 0;
    verdict(4, "weight map law", passed, format!("10^4 triples: branch violations {branch}, monotonicity {mono}, swap symmetry {swap}"));
}

#[test]
fn criterion_05_illumination_synthesis() {
    let mut rng = substream(5, "acceptance/stretch");
    let img = Image::new(Field::from_fn(16, 16, |_, _| rng.random_range(0.0..=1.0))).unwrap();
    let identity = stretch_illumination(&img, 1.0, 0.0).unwrap().image == img;
    let fixed = [0.3, 1.0, 2.0, 3.0, 7.5]
        .iter()
        .all(|&a| stretch_illumination(&Image::new(Field::filled(2, 2, 0.5)).unwrap(), a, 0.0).unwrap().image.data().iter().all(|&v| v == 0.5));

    let n = 1024;
    let ramp = Image::new(Field::from_fn(1, n, |_, x| x as f64 / (n - 1) as f64)).unwrap();
    let predicted = ramp.data().iter().filter(|&&v| (v - 0.5).abs() > 1.0 / 6.0).count();
    let recipe = DegradeRecipe { alpha: 3.0, offset: 0.0, blur_frames: 1, seed: 0 };
    let pair = make_degraded_pair("ramp", std::slice::from_ref(&ramp), &EventStream::empty(n as u32, 1), &recipe).unwrap();
    let measured = (pair.manifest.clipped_fraction * n as f64).round() as usize;
    let diff = measured.abs_diff(predicted);
    let passed = identity && fixed && diff <= 1;
    verdict(5, "illumination synthesis", passed, format!("identity {identity}, fixed point {fixed}, ramp clipped {measured} vs predicted {predicted} px"));
}

#[test]
fn criterion_06_events_help_extreme_regions() {
    let start = Instant::now();
    let foundation = checkpoint::load_foundation().unwrap();
    let r = experiment::event_benefit(&foundation, 1, &ProtocolConfig::event_benefit(), &SceneConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let (b, f) = (&r.frame_only, &r.fused);
    println!(
        "    frame-only: normal {:.4} extreme {:.4} | with events: normal {:.4} extreme {:.4}",
        b.normal.unwrap().absrel,
        b.extreme.unwrap().absrel,
        f.normal.unwrap().absrel,
        f.extreme.unwrap().absrel
    );
    let passed = r.passed() && elapsed < Duration::from_secs(600);
    verdict(
        6,
        "degradation improvement",
        passed,
        format!(
            "extreme AbsRel gain {:.1}% (need >= 10%), normal change {:+.1}% (need <= +2%), {}",
            100.0 * r.extreme_gain,
            100.0 * r.normal_change,
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_07_temporal_term_edge_benefit() {
    let start = Instant::now();
    let foundation = checkpoint::load_foundation().unwrap();
    let r = experiment::edge_benefit(&foundation, &[1, 2, 3, 4, 5], &ProtocolConfig::edge_benefit(), &SceneConfig::default()).unwrap();
    let elapsed = start.elapsed();
    for run in &r.runs {
        println!("    seed {}: EGE {:.4} without, {:.4} with, gain {:+.2}%", run.seed, run.ege_without, run.ege_with, 100.0 * run.gain());
    }
    let passed = r.passed() && elapsed < Duration::from_secs(900);
    verdict(
        7,
        "edge benefit",
        passed,
        format!(
            "median EGE {:.4} vs {:.4}, median gain {:+.2}% (need >= 3%), {}",
            r.median_ege_with,
            r.median_ege_without,
            100.0 * r.median_gain,
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_08_zero_injection_is_exact() {
    let mut rng = substream(8, "acceptance/zero");
    let golden = checkpoint::load_foundation().unwrap();
    let mut mismatches = 0;
    for i in 0..100 {
        let mut params = if i % 2 == 0 { golden.clone() } else { ModelParams::init(ArchDescriptor::toy(5), i) };
        params.adapter.value.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        params.adapter.value.bias.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let side = [16, 24, 32][i as usize % 3];
        let frame = Image::new(Field::from_fn(side, side, |_, _| rng.random_range(0.0..=1.0))).unwrap();
        let data = (0..5 * side * side).map(|_| if rng.random_bool(0.2) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
        let vox = VoxelGrid::from_data(5, side, side, data).unwrap();
        let fused = forward_fuse(&frame, &vox, &params).unwrap().depth;
        let alone = forward_frame_only(&frame, &params).unwrap();
        mismatches += (fused.depth().data() != alone.depth().data()) as usize;
    }
    verdict(8, "zero injection", mismatches == 0, format!("100 random inputs, {mismatches} non-identical predictions"));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli(root: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_evdepth"))
        .args(args)
        .env("EVDEPTH_DATA_DIR", root)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn cli_pipeline(root: &Path) -> bool {
    let steps: [&[&str]; 8] = [
        &["synth", "--out", "data", "--seed", "11", "--count", "4", "--jobs", "2"],
        &["voxelize", "--in", "data/scene0000/events.evt", "--out", "v.tns"],
        &["degrade", "--frames", "data/scene0000/clean.pgm", "data/scene0001/clean.pgm", "--seed", "3", "--out", "deg"],
        &["entropy", "--frame", "data/scene0000/frame.pgm", "--voxels", "v.tns", "--out", "ent"],
        &["localize", "--depth", "data/scene0000/depth.pfm", "--flow", "data/scene0000/flow.tns", "--out", "loc"],
        &["train", "--manifest", "data/manifest.json", "--out", "model", "--epochs", "2", "--pretrain-epochs", "1", "--lr", "1e-2", "--patch-size", "8"],
        &["eval", "--manifest", "data/manifest.json", "--checkpoint", "model", "--write-pred", "pred", "--out", "eval"],
        &["plot", "--log", "model/log.jsonl", "--out", "loss.svg"],
    ];
    steps.iter().all(|a| cli(root, a))
}

#[test]
fn criterion_09_determinism() {
    let cfg = TrainConfig { lr: 1e-2, epochs: 3, pretrain_epochs: 2, patch_size: 8, seed: 9, ..Default::default() };
    let set: Vec<_> = generate(9, 0, 6, &SceneConfig::default(), Degradation::BlurAndIllumination)
        .unwrap()
        .into_iter()
        .map(|s| s.sample)
        .collect();
    let foundation = checkpoint::load_foundation().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut logs = Vec::new();
    for d in &dirs {
        let out = fusenet::train(&set, foundation.clone(), &cfg).unwrap();
        logs.push(serde_json::to_vec(&out.log).unwrap());
        checkpoint::save(d.path(), &out.params).unwrap();
    }
    let lib_same = logs[0] == logs[1] && files(dirs[0].path()) == files(dirs[1].path());

    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let ok = runs.iter().all(|r| cli_pipeline(r.path()));
    let (a, b) = (files(runs[0].path()), files(runs[1].path()));
    let cli_same = ok && !a.is_empty() && a == b;
    verdict(
        9,
        "determinism",
        lib_same && cli_same,
        format!("train logs and checkpoints identical {lib_same}; CLI pipeline ({} files) identical {cli_same}", a.len()),
    );
}

/// One-sided at the border, central inside.
fn oracle_grad(d: &[f64], ok: &[bool], h: usize, w: usize, y: usize, x: usize) -> Option<f64> {
    let nb = |i: usize, n: usize| if i == 0 { (0, 1, 1.0) } else if i == n - 1 { (n - 2, n - 1, 1.0) } else { (i - 1, i + 1, 2.0) };
    let (x0, x1, dx) = nb(x, w);
    let (y0, y1, dy) = nb(y, h);
    let at = |yy: usize, xx: usize| yy * w + xx;
    if ![at(y, x), at(y, x0), at(y, x1), at(y0, x), at(y1, x)].iter().all(|&i| ok[i]) {
        return None;
    }
    let gx = (d[at(y, x1)] - d[at(y, x0)]) / dx;
    let gy = (d[at(y1, x)] - d[at(y0, x)]) / dy;
    Some((gx * gx + gy * gy).sqrt())
}

#[test]
fn criterion_10_metric_oracles() {
    let mut rng = substream(10, "acceptance/metrics");
    let (mut worst, mut mono_bad) = (0.0f64, 0usize);
    for _ in 0..100 {
        let (h, w) = (rng.random_range(3..12), rng.random_range(3..12));
        let n = h * w;
        let g: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.5..50.0) }).collect();
        let p: Vec<f64> = g.iter().map(|&v| if rng.random_bool(0.03) { -1.0 } else { v.max(0.5) * rng.random_range(0.6..1.6) }).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let gt = DepthMap::new(Field::new(h, w, g.clone()).unwrap());
        let pred = DepthMap::new(Field::new(h, w, p.clone()).unwrap());
        let gv: Vec<bool> = g.iter().map(|&v| v > 0.0).collect();
        let pv: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
        let sel: Vec<usize> = (0..n).filter(|&i| mask[i] && gv[i] && pv[i]).collect();
        if sel.is_empty() {
            continue;
        }
        let m = sel.len() as f64;
        let absrel: f64 = sel.iter().map(|&i| (p[i] - g[i]).abs() / g[i]).sum::<f64>() / m;
        let mut deltas = [0.0; 3];
        for (k, d) in deltas.iter_mut().enumerate() {
            let bound = 1.25f64.powi(k as i32 + 1);
            *d = sel.iter().filter(|&&i| (p[i] / g[i]).max(g[i] / p[i]) < bound).count() as f64 / m;
        }
        let capped: Vec<usize> = sel.iter().copied().filter(|&i| g[i] <= 30.0).collect();
        let mut checks = vec![
            (metrics::absrel(&pred, &gt, &mask).unwrap(), absrel),
            (metrics::delta_acc(&pred, &gt, &mask, 1).unwrap(), deltas[0]),
            (metrics::delta_acc(&pred, &gt, &mask, 2).unwrap(), deltas[1]),
            (metrics::delta_acc(&pred, &gt, &mask, 3).unwrap(), deltas[2]),
        ];
        if !capped.is_empty() {
            let mae = capped.iter().map(|&i| (p[i] - g[i]).abs()).sum::<f64>() / capped.len() as f64;
            checks.push((metrics::mae(&pred, &gt, &mask, 30.0).unwrap(), mae));
        }
        let thr = rng.random_range(0.5..10.0);
        let (mut sum, mut count) = (0.0, 0usize);
        for y in 0..h {
            for x in 0..w {
                if let (Some(a), Some(b)) = (oracle_grad(&p, &pv, h, w, y, x), oracle_grad(&g, &gv, h, w, y, x)) {
                    if b > thr {
                        sum += (a - b).abs() / b;
                        count += 1;
                    }
                }
            }
        }
        if count > 0 {
            checks.push((metrics::ege(&pred, &gt, thr).unwrap(), sum / count as f64));
        } else {
            assert!(metrics::ege(&pred, &gt, thr).is_err());
        }
        for (a, b) in checks {
            worst = worst.max((a - b).abs());
        }
        mono_bad += !(deltas[0] <= deltas[1] && deltas[1] <= deltas[2]) as usize;
        let partition = RegionPartition::all_normal(h, w);
        let _ = metrics::evaluate(&pred, &gt, &partition, &metrics::EvalOptions::default());
    }
    let passed = worst <= 1e-9 && mono_bad == 0;
    verdict(10, "metric oracles", passed, format!("100 pairs, max |diff| {worst:.1e} (tol 1e-9), delta monotonicity violations {mono_bad}"));
}
