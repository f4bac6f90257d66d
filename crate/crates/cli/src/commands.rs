use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use evdepth::degrade::{make_degraded_pair, write_degraded_pair, DegradeRecipe, RegionPartition};
use evdepth::easf::{self, patch_entropy_event, patch_entropy_frame, weight_map};
use evdepth::evio::{self, EventFormat, EventStream, ParseOptions, VoxelGrid};
use evdepth::experiment::{self, FoundationConfig};
use evdepth::fusenet::{self, checkpoint, gradcheck, EpochRecord, ModelParams, TrainConfig, TrainOutcome};
use evdepth::imagery::{self, DepthMap, Field, Image};
use evdepth::metrics::{self, Alignment, EvalOptions, EvalReport};
use evdepth::mgtc::{self, Label};
use evdepth::synth::{self, Degradation, SceneConfig};

use crate::config::{resolve, Header, Overrides, Resolved};
use crate::dataset::{self, write_json, RunManifest, MANIFEST_FILE};
use crate::error::{CliError, PathContext, Result};
use crate::{
    AlignArg, Cli, Command, DegradeArgs, EntropyArgs, EvalArgs, GradcheckArgs, LocalizeArgs, PlotArgs, PretrainArgs,
    Stage, SynthArgs, TrainArgs, VoxelizeArgs,
};

/// Shared context for one invocation.
struct Ctx {
    config: Option<PathBuf>,
    data_dir: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn resolve<T>(&self, command: &str, flags: Overrides) -> Result<Resolved<T>>
    where
        T: Serialize + serde::de::DeserializeOwned + Default,
    {
        let file = self.config.as_ref().map(|p| self.path(p));
        resolve(command, file.as_deref(), flags)
    }
}

/// Header plus the resolved configuration, written by every command.
#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    header: Header,
    command: &'a str,
    config: &'a serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<T>,
}

fn record<T: Serialize>(path: &Path, header: Header, command: &str, config: &serde_json::Value, result: Option<T>) -> Result<()> {
    write_json(path, &RunRecord { header, command, config, result })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { config: cli.config, data_dir: cli.data_dir };
    match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Voxelize(a) => voxelize(&ctx, a),
        Command::Degrade(a) => degrade(&ctx, a),
        Command::Entropy(a) => entropy(&ctx, a),
        Command::Localize(a) => localize(&ctx, a),
        Command::Pretrain(a) => pretrain(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Gradcheck(a) => gradcheck_cmd(&ctx, a),
        Command::Plot(a) => plot(&ctx, a),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    seed: u64,
    first: usize,
    count: usize,
    kind: Degradation,
    scene: SceneConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { seed: 0, first: 0, count: 32, kind: Degradation::BlurAndIllumination, scene: SceneConfig::default() }
    }
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let flags = Overrides::default()
        .set("seed", a.seed)
        .set("first", a.first)
        .set("count", a.count)
        .set("kind", a.kind)
        .set("scene.bins", a.bins);
    let r: Resolved<SynthConfig> = ctx.resolve("synth", flags)?;
    let c = &r.value;
    c.scene.validate().map_err(CliError::usage)?;
    let out = ctx.path(&a.out);
    create_dir(&out)?;
    let samples = (c.first..c.first + c.count)
        .into_par_iter()
        .map(|i| {
            let scene = synth::render_scene(c.seed, i, &c.scene);
            let s = synth::sample_scene(c.seed, &scene, &c.scene, c.kind)?;
            dataset::write_sample(&out, &s, &scene.events)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest { header: r.header(c.seed), bins: c.scene.bins, samples };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!("wrote {} samples to {}", c.count, out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VoxelizeConfig {
    bins: usize,
    zero_as_negative: bool,
}

impl Default for VoxelizeConfig {
    fn default() -> Self {
        Self { bins: evio::DEFAULT_BINS, zero_as_negative: false }
    }
}

fn read_events(path: &Path, opts: ParseOptions) -> Result<EventStream> {
    let bytes = std::fs::read(path).at(path)?;
    evio::parse_events(&bytes, EventFormat::from_path(path), opts).at(path)
}

fn voxelize(ctx: &Ctx, a: VoxelizeArgs) -> Result<()> {
    let flags = Overrides::default().set("bins", a.bins).set("zero_as_negative", a.zero_as_negative.then_some(true));
    let r: Resolved<VoxelizeConfig> = ctx.resolve("voxelize", flags)?;
    let input = ctx.path(&a.input);
    let stream = read_events(&input, ParseOptions { zero_as_negative: r.value.zero_as_negative })?;
    let grid = evio::voxelize(&stream, r.value.bins)?;
    let meta = json!({
        "header": r.header(0),
        "config": r.json,
        "events": stream.len(),
        "bins": grid.bins(),
        "height": grid.height(),
        "width": grid.width(),
        "sum": grid.sum(),
    });
    let out = ctx.path(&a.out);
    imagery::write_tensor_file(&out, &grid.to_tensor(), Some(&meta)).at(&out)?;
    println!("{} events -> {}x{}x{} grid at {}", stream.len(), grid.bins(), grid.height(), grid.width(), out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DegradeConfig {
    seed: u64,
    alpha: Option<f64>,
    offset: Option<f64>,
}

fn degrade(ctx: &Ctx, a: DegradeArgs) -> Result<()> {
    let flags = Overrides::default().set("seed", a.seed).set("alpha", a.alpha).set("offset", a.offset);
    let r: Resolved<DegradeConfig> = ctx.resolve("degrade", flags)?;
    let c = &r.value;
    let frames = a.frames.iter().map(|p| dataset::read_image(&ctx.path(p))).collect::<Result<Vec<Image>>>()?;
    let (h, w) = frames[0].shape();
    let events = match &a.events {
        Some(p) => read_events(&ctx.path(p), ParseOptions::default())?,
        None => EventStream::empty(w as u32, h as u32),
    };
    let recipe = match c.alpha {
        Some(alpha) => DegradeRecipe { alpha, offset: c.offset.unwrap_or(0.0), blur_frames: frames.len(), seed: c.seed },
        None => DegradeRecipe::sample(c.seed, frames.len()),
    };
    let pair = make_degraded_pair(&a.id, &frames, &events, &recipe)?;
    let out = ctx.path(&a.out);
    create_dir(&out)?;
    let manifest = write_degraded_pair(&out, &pair)?;
    record(&out.join(format!("{}_run.json", a.id)), r.header(c.seed), "degrade", &r.json, Some(&manifest))?;
    println!(
        "alpha {:.4} offset {:+.3} K {}: clipped {:.4}, extreme {:.4}",
        manifest.alpha, manifest.offset, manifest.blur_frames, manifest.clipped_fraction, manifest.extreme_fraction
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EntropyConfig {
    patch_size: usize,
    entropy_bins: usize,
    threshold: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            patch_size: easf::DEFAULT_PATCH_SIZE,
            entropy_bins: easf::DEFAULT_ENTROPY_BINS,
            threshold: easf::DEFAULT_THRESHOLD,
        }
    }
}

/// Tensor, PGM heatmap and JSON map of a field in `[0, 1]`.
fn write_map(dir: &Path, name: &str, f: &Field) -> Result<()> {
    let tns = dir.join(format!("{name}.tns"));
    imagery::write_tensor_file(&tns, &f.to_tensor(), None).at(&tns)?;
    let pgm = dir.join(format!("{name}.pgm"));
    std::fs::write(&pgm, imagery::write_pgm(&Image::from_field_clamped(f.clone()))).at(&pgm)?;
    write_json(&dir.join(format!("{name}.json")), &json!({"height": f.height(), "width": f.width(), "data": f.data()}))
}

fn entropy(ctx: &Ctx, a: EntropyArgs) -> Result<()> {
    let flags = Overrides::default()
        .set("patch_size", a.patch_size)
        .set("entropy_bins", a.entropy_bins)
        .set("threshold", a.threshold);
    let r: Resolved<EntropyConfig> = ctx.resolve("entropy", flags)?;
    let c = &r.value;
    let frame = dataset::read_image(&ctx.path(&a.frame))?;
    let out = ctx.path(&a.out);
    create_dir(&out)?;
    let ef = patch_entropy_frame(&frame, c.patch_size, c.entropy_bins)?;
    write_map(&out, "frame_entropy", &ef.data)?;
    let mut summary = json!({"frame_mean": mean(ef.data.data())});
    if let Some(v) = &a.voxels {
        let path = ctx.path(v);
        let grid = VoxelGrid::from_tensor(&imagery::read_tensor_file(&path).at(&path)?).at(&path)?;
        let ee = patch_entropy_event(&grid, c.patch_size, c.entropy_bins)?;
        let wm = weight_map(&ee, &ef, c.threshold)?;
        write_map(&out, "event_entropy", &ee.data)?;
        write_map(&out, "weights", &wm.data)?;
        summary["event_mean"] = json!(mean(ee.data.data()));
        summary["weight_mean"] = json!(mean(wm.data.data()));
    }
    println!("{summary}");
    record(&out.join("run.json"), r.header(0), "entropy", &r.json, Some(summary))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LocalizeConfig {
    timestamps: Vec<f64>,
    edge_threshold: Option<f64>,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { timestamps: mgtc::DEFAULT_TIMESTAMPS.to_vec(), edge_threshold: None }
    }
}

fn localize(ctx: &Ctx, a: LocalizeArgs) -> Result<()> {
    let flags = Overrides::default().set("timestamps", a.timestamps).set("edge_threshold", a.edge_threshold);
    let r: Resolved<LocalizeConfig> = ctx.resolve("localize", flags)?;
    let depth = dataset::read_depth(&ctx.path(&a.depth))?;
    let flow = dataset::read_flow(&ctx.path(&a.flow))?;
    let thresh = match r.value.edge_threshold {
        Some(t) => t,
        None => mgtc::default_edge_threshold(&depth).ok_or_else(|| CliError::domain("depth map has no edges"))?,
    };
    let labels = mgtc::localize_regions(&depth, &flow, &r.value.timestamps, thresh)?;
    let out = ctx.path(&a.out);
    create_dir(&out)?;
    let pgm = out.join("labels.pgm");
    std::fs::write(&pgm, labels.to_pgm()).at(&pgm)?;
    let band = out.join("blur_band.pgm");
    std::fs::write(&band, imagery::write_pgm_mask(&labels.blur_band, labels.height, labels.width)).at(&band)?;
    let counts = json!({
        "edge_threshold": thresh,
        "foreground": labels.count(Label::Foreground),
        "background": labels.count(Label::Background),
        "ignore": labels.count(Label::Ignore),
    });
    println!("{counts}");
    record(&out.join("run.json"), r.header(0), "localize", &r.json, Some(counts))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FoundationRun {
    foundation: FoundationConfig,
    scene: SceneConfig,
}

fn train_flags(a: &TrainArgs) -> Overrides {
    Overrides::default()
        .set("seed", a.seed)
        .set("lr", a.lr)
        .set("momentum", a.momentum)
        .set("epochs", a.epochs)
        .set("pretrain_epochs", a.pretrain_epochs)
        .set("batch_size", a.batch_size)
        .set("lambdas.gt", a.lambda_gt)
        .set("lambdas.spatial", a.lambda_s)
        .set("lambdas.temporal", a.lambda_t)
        .set("patch_size", a.patch_size)
        .set("tau", a.tau)
        .set("clip_norm", a.clip_norm)
        .set("zero_events", a.zero_events.then_some(true))
}

fn write_outcome(out: &Path, outcome: &TrainOutcome, header: Header, command: &str, config: &serde_json::Value) -> Result<()> {
    checkpoint::save(out, &outcome.params)?;
    let mut log = String::new();
    for rec in &outcome.log {
        log.push_str(&serde_json::to_string(rec)?);
        log.push('\n');
    }
    let path = out.join("log.jsonl");
    std::fs::write(&path, log).at(&path)?;
    let last: Option<&EpochRecord> = outcome.log.last();
    record(&out.join("run.json"), header, command, config, last)?;
    if let Some(r) = last {
        println!("{:?} epoch {}: loss {:.6}", r.phase, r.epoch, r.loss);
    }
    Ok(())
}

fn load_foundation(ctx: &Ctx, p: Option<&PathBuf>) -> Result<ModelParams> {
    let dir = p.map(|p| ctx.path(p)).unwrap_or_else(checkpoint::foundation_dir);
    checkpoint::load(&dir).at(&dir)
}

fn load_manifest(ctx: &Ctx, p: Option<&PathBuf>) -> Result<Vec<dataset::Loaded>> {
    let p = p.ok_or_else(|| CliError::usage("--manifest is required"))?;
    let (m, root) = RunManifest::read(&ctx.path(p))?;
    m.load(&root)
}

fn pretrain(ctx: &Ctx, a: PretrainArgs) -> Result<()> {
    let out = ctx.path(&a.train.out);
    match a.stage {
        Stage::Foundation => {
            let t = &a.train;
            let flags = Overrides::default()
                .set("foundation.scene_seed", t.seed)
                .set("foundation.scenes", a.scenes)
                .set("foundation.epochs", t.epochs)
                .set("foundation.lr", t.lr)
                .set("foundation.batch_size", t.batch_size)
                .set("foundation.clip_norm", t.clip_norm);
            let r: Resolved<FoundationRun> = ctx.resolve("pretrain", flags)?;
            r.value.scene.validate().map_err(CliError::usage)?;
            let outcome = experiment::foundation(&r.value.foundation, &r.value.scene)?;
            create_dir(&out)?;
            write_outcome(&out, &outcome, r.header(r.value.foundation.scene_seed), "pretrain foundation", &r.json)
        }
        Stage::Event => {
            let r: Resolved<TrainConfig> = ctx.resolve("pretrain", train_flags(&a.train))?;
            let params = load_foundation(ctx, a.train.foundation.as_ref())?;
            let samples: Vec<_> = load_manifest(ctx, a.train.manifest.as_ref())?.into_iter().map(|l| l.sample).collect();
            let outcome = fusenet::pretrain(&samples, params, &r.value)?;
            create_dir(&out)?;
            write_outcome(&out, &outcome, r.header(r.value.seed), "pretrain event", &r.json)
        }
    }
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let r: Resolved<TrainConfig> = ctx.resolve("train", train_flags(&a))?;
    let params = load_foundation(ctx, a.foundation.as_ref())?;
    let samples: Vec<_> = load_manifest(ctx, a.manifest.as_ref())?.into_iter().map(|l| l.sample).collect();
    let outcome = fusenet::train(&samples, params, &r.value)?;
    let out = ctx.path(&a.out);
    create_dir(&out)?;
    write_outcome(&out, &outcome, r.header(r.value.seed), "train", &r.json)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    alignment: Alignment,
    edge_threshold: Option<f64>,
    mae_cap: Option<f64>,
    zero_events: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self { alignment: o.alignment, edge_threshold: o.edge_threshold, mae_cap: o.mae_cap, zero_events: false }
    }
}

/// Ground truth, region masks and, for checkpoints, the model inputs.
struct EvalItem {
    id: String,
    gt: DepthMap,
    partition: RegionPartition,
    sample: Option<fusenet::TrainSample>,
}

fn eval_items(ctx: &Ctx, a: &EvalArgs) -> Result<Vec<EvalItem>> {
    match (&a.manifest, &a.gt) {
        (Some(_), None) => Ok(load_manifest(ctx, a.manifest.as_ref())?
            .into_iter()
            .map(|l| EvalItem {
                id: l.sample.id.clone(),
                gt: l.sample.depth.clone(),
                partition: l.partition,
                sample: Some(l.sample),
            })
            .collect()),
        (None, Some(gt_dir)) => {
            let gt_dir = ctx.path(gt_dir);
            let mut ids: Vec<String> = std::fs::read_dir(&gt_dir)
                .at(&gt_dir)?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let p = e.path();
                    (p.extension()? == "pfm").then(|| p.file_stem()?.to_str().map(str::to_string))?
                })
                .collect();
            ids.sort();
            ids.into_iter()
                .map(|id| {
                    let gt = dataset::read_depth(&gt_dir.join(format!("{id}.pfm")))?;
                    let (h, w) = gt.shape();
                    let partition = match &a.partition {
                        Some(d) => {
                            let extreme = dataset::read_mask(&ctx.path(d).join(format!("{id}.pgm")))?;
                            if extreme.len() != h * w {
                                return Err(CliError::domain(format!("{id}: mask size differs from the depth map")));
                            }
                            RegionPartition { height: h, width: w, extreme }
                        }
                        None => RegionPartition::all_normal(h, w),
                    };
                    Ok(EvalItem { id, gt, partition, sample: None })
                })
                .collect()
        }
        _ => Err(CliError::usage("exactly one of --manifest or --gt is required")),
    }
}

#[derive(Serialize)]
struct SampleReport {
    id: String,
    report: EvalReport,
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let flags = Overrides::default()
        .set("alignment", a.alignment.map(|v| match v {
            AlignArg::Median => Alignment::Median,
            AlignArg::None => Alignment::None,
        }))
        .set("edge_threshold", a.edge_threshold)
        .set("mae_cap", a.mae_cap)
        .set("zero_events", a.zero_events.then_some(true));
    let r: Resolved<EvalConfig> = ctx.resolve("eval", flags)?;
    let c = &r.value;
    let opts = EvalOptions { alignment: c.alignment, edge_threshold: c.edge_threshold, mae_cap: c.mae_cap };
    let items = eval_items(ctx, &a)?;
    let params = match (&a.checkpoint, &a.pred) {
        (Some(p), None) => {
            if a.manifest.is_none() {
                return Err(CliError::usage("--checkpoint needs --manifest for the model inputs"));
            }
            let dir = ctx.path(p);
            Some(checkpoint::load(&dir).at(&dir)?)
        }
        (None, Some(_)) => None,
        _ => return Err(CliError::usage("exactly one of --checkpoint or --pred is required")),
    };
    let pred_dir = a.pred.as_ref().map(|p| ctx.path(p));
    let write_dir = a.write_pred.as_ref().map(|p| ctx.path(p));
    if let Some(d) = &write_dir {
        create_dir(d)?;
    }
    let reports = items
        .par_iter()
        .map(|it| {
            let pred = match (&params, &it.sample) {
                (Some(p), Some(s)) => {
                    let zeros;
                    let vox = if c.zero_events {
                        zeros = VoxelGrid::zeros(s.voxels.bins(), s.voxels.height(), s.voxels.width());
                        &zeros
                    } else {
                        &s.voxels
                    };
                    fusenet::forward_fuse(&s.frame, vox, p)?.depth
                }
                _ => {
                    let dir = pred_dir.as_ref().expect("prediction directory");
                    dataset::read_depth(&dir.join(format!("{}.pfm", it.id)))?
                }
            };
            if let Some(d) = &write_dir {
                let path = d.join(format!("{}.pfm", it.id));
                std::fs::write(&path, imagery::write_pfm(pred.depth())).at(&path)?;
            }
            let report = metrics::evaluate(&pred, &it.gt, &it.partition, &opts).at(Path::new(&it.id))?;
            Ok(SampleReport { id: it.id.clone(), report })
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<EvalReport> = reports.iter().map(|s| s.report.clone()).collect();
    let total = metrics::aggregate(&all);
    let rows = vec![(a.name.clone(), total.clone())];
    print!("{}", metrics::table_text(&rows));
    if let Some(out) = &a.out {
        let out = ctx.path(out);
        create_dir(&out)?;
        let csv = out.join("table.csv");
        std::fs::write(&csv, metrics::table_csv(&rows)).at(&csv)?;
        let txt = out.join("table.txt");
        std::fs::write(&txt, metrics::table_text(&rows)).at(&txt)?;
        write_json(
            &out.join("report.json"),
            &json!({"header": r.header(0), "config": r.json, "aggregate": total, "samples": reports}),
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradcheckConfig {
    seed: u64,
    trials: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, trials: 20 }
    }
}

fn gradcheck_cmd(ctx: &Ctx, a: GradcheckArgs) -> Result<()> {
    let r: Resolved<GradcheckConfig> = ctx.resolve("gradcheck", Overrides::default().set("seed", a.seed).set("trials", a.trials))?;
    if r.value.trials == 0 {
        return Err(CliError::usage("trials must be positive"));
    }
    let results = gradcheck::run_all(r.value.seed, r.value.trials);
    for s in &results {
        println!(
            "{:<22} {:>4} trials {:>6} checks  max rel {:.3e}  tol {:.0e}  {}",
            s.name,
            s.trials,
            s.checked,
            s.max_rel_error,
            s.tolerance,
            if s.passed { "ok" } else { "FAILED" }
        );
    }
    if let Some(out) = &a.out {
        write_json(&ctx.path(out), &json!({"header": r.header(r.value.seed), "config": r.json, "suites": results}))?;
    }
    let failed: Vec<_> = results.iter().filter(|s| !s.passed).map(|s| s.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::domain(format!("gradient check failed: {}", failed.join(", "))))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlotConfig {
    metric: String,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { metric: "loss".into() }
    }
}

fn plot(ctx: &Ctx, a: PlotArgs) -> Result<()> {
    let r: Resolved<PlotConfig> = ctx.resolve("plot", Overrides::default().set("metric", a.metric))?;
    let header = r.header(0);
    let svg = match (&a.log, &a.heatmap) {
        (Some(log), None) => {
            let path = ctx.path(log);
            let text = std::fs::read_to_string(&path).at(&path)?;
            crate::plot::curves(&text, &r.value.metric, &header)?
        }
        (None, Some(map)) => {
            let path = ctx.path(map);
            let text = std::fs::read_to_string(&path).at(&path)?;
            crate::plot::heatmap(&text, &header)?
        }
        _ => return Err(CliError::usage("exactly one of --log or --heatmap is required")),
    };
    let out = ctx.path(&a.out);
    std::fs::write(&out, svg).at(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
