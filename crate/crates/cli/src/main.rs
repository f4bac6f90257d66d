//! `evdepth` command-line tool.

mod commands;
mod config;
mod dataset;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "evdepth", version, about = "Event-guided depth estimation under degraded imaging")]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-sample work (0 uses every core).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "EVDEPTH_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a procedural scene set and write its run manifest.
    Synth(SynthArgs),
    /// Convert an event file into a voxel grid tensor.
    Voxelize(VoxelizeArgs),
    /// Blur a sequence of sharp frames and stretch its illumination.
    Degrade(DegradeArgs),
    /// Patch entropy maps and the event weight map.
    Entropy(EntropyArgs),
    /// Foreground/background labels inside the motion blur band.
    Localize(LocalizeArgs),
    /// Train the frame-only stand-in or pretrain the event encoder.
    Pretrain(PretrainArgs),
    /// Two-step training of the fusion model on a manifest.
    Train(TrainArgs),
    /// Evaluate predictions or a checkpoint against ground truth.
    Eval(EvalArgs),
    /// Run every finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Render SVG curves or heatmaps from JSON logs.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for the manifest and sample files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Index of the first scene.
    #[arg(long)]
    pub first: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    /// clean, blur or blur_and_illumination.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VoxelizeArgs {
    /// Event file (`.csv`/`.txt` or packed binary).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Read polarity 0 as negative.
    #[arg(long)]
    pub zero_as_negative: bool,
    /// Output tensor; a `.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Sharp frames (PGM) spanning the exposure window, oldest first.
    #[arg(long, num_args = 1.., required = true)]
    pub frames: Vec<PathBuf>,
    /// Optional event file carried alongside the pair.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Identifier used in output file names.
    #[arg(long, default_value = "sample")]
    pub id: String,
    /// Stretch factor; drawn from the seed when omitted.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Brightness offset; drawn from the seed when alpha is omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    /// Frame (PGM).
    #[arg(long)]
    pub frame: PathBuf,
    /// Voxel grid tensor; needed for the event entropy and weight map.
    #[arg(long)]
    pub voxels: Option<PathBuf>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub entropy_bins: Option<usize>,
    /// Entropy-sum threshold below which the weight is 0.5.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    /// Ground-truth depth (PFM).
    #[arg(long)]
    pub depth: PathBuf,
    /// Flow tensor `[2, H, W]`.
    #[arg(long)]
    pub flow: PathBuf,
    /// Normalized warp times, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub timestamps: Option<Vec<f64>>,
    /// Depth-gradient edge threshold; 5% of the depth range when omitted.
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Frame encoder and decoder on clean synthetic scenes.
    Foundation,
    /// Event encoder aligned to frozen frame features.
    Event,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long, value_enum)]
    pub stage: Stage,
    /// Foundation: number of clean training scenes.
    #[arg(long)]
    pub scenes: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run manifest (not used by the foundation stage).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Frozen stand-in checkpoint; the bundled one by default.
    #[arg(long)]
    pub foundation: Option<PathBuf>,
    /// Output checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda_gt: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Replace every voxel grid with zeros.
    #[arg(long)]
    pub zero_events: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Median,
    None,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run manifest supplying inputs, ground truth and region masks.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of ground-truth depth `<id>.pfm` (instead of a manifest).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Directory of extreme-region masks `<id>.pgm` matching `--gt`.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Directory of predicted depth `<id>.pfm`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Checkpoint to run on the manifest inputs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write the checkpoint's predictions here as `<id>.pfm`.
    #[arg(long)]
    pub write_pred: Option<PathBuf>,
    /// Feed zero voxel grids to the checkpoint.
    #[arg(long)]
    pub zero_events: bool,
    #[arg(long, value_enum)]
    pub alignment: Option<AlignArg>,
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    /// Report MAE capped at this many metres.
    #[arg(long)]
    pub mae_cap: Option<f64>,
    /// Row label in the table.
    #[arg(long, default_value = "model")]
    pub name: String,
    /// Output directory for report.json, table.csv and table.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Write the suite results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Training log (JSON lines) to draw as curves.
    #[arg(long, conflicts_with = "heatmap", required_unless_present = "heatmap")]
    pub log: Option<PathBuf>,
    /// JSON map `{height, width, data}` to draw as a heatmap.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Log field to plot: loss, gt, spatial, temporal or grad_norm.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            if let error::CliError::Usage(_) = e {
                eprintln!("see `evdepth --help` for the expected arguments");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
