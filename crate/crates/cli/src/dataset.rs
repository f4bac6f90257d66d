use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use evdepth::degrade::RegionPartition;
use evdepth::evio::{self, EventFormat, ParseOptions};
use evdepth::fusenet::TrainSample;
use evdepth::imagery::{self, DepthMap, FlowField, Image};
use evdepth::synth::SynthSample;

use crate::config::Header;
use crate::error::{CliError, PathContext, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// File paths of one sample, relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub frame: String,
    pub events: String,
    pub flow: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extreme_mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub header: Header,
    pub bins: usize,
    pub samples: Vec<SampleRecord>,
}

/// A manifest entry with every file parsed.
pub struct Loaded {
    pub sample: TrainSample,
    pub partition: RegionPartition,
}

fn invalid(msg: String) -> CliError {
    CliError::domain(format!("invalid manifest: {msg}"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let img = imagery::read_pgm(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(img.data().iter().map(|&v| v > 0.5).collect())
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let field = imagery::read_pfm(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(DepthMap::new(field))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let t = imagery::read_tensor(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    FlowField::from_tensor(&t).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn read_image(path: &Path) -> Result<Image> {
    imagery::read_pgm(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if m.bins == 0 {
            return Err(invalid("bins must be positive".into()));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, root))
    }

    /// Parses every referenced file; any missing or malformed file is an error.
    pub fn load(&self, root: &Path) -> Result<Vec<Loaded>> {
        self.samples.iter().map(|r| self.load_one(root, r)).collect()
    }

    fn load_one(&self, root: &Path, r: &SampleRecord) -> Result<Loaded> {
        let frame = read_image(&root.join(&r.frame))?;
        let ev_path = root.join(&r.events);
        let stream = evio::parse_events(&read(&ev_path)?, EventFormat::from_path(&ev_path), ParseOptions::default())
            .map_err(|e| invalid(format!("{}: {e}", ev_path.display())))?;
        let voxels = evio::voxelize(&stream, self.bins).map_err(|e| invalid(format!("{}: {e}", ev_path.display())))?;
        let depth = read_depth(&root.join(&r.depth))?;
        let flow = read_flow(&root.join(&r.flow))?;
        let clean = r.clean.as_ref().map(|c| read_image(&root.join(c))).transpose()?;
        let (h, w) = frame.shape();
        let partition = match &r.extreme_mask {
            Some(m) => {
                let extreme = read_mask(&root.join(m))?;
                if extreme.len() != h * w {
                    return Err(invalid(format!("{}: mask size differs from the frame", r.id)));
                }
                RegionPartition { height: h, width: w, extreme }
            }
            None => RegionPartition::all_normal(h, w),
        };
        let sample = TrainSample { id: r.id.clone(), frame, voxels, depth, flow, clean };
        Ok(Loaded { sample, partition })
    }
}

/// Writes the files of one synthetic sample into `root/<id>/`.
pub fn write_sample(root: &Path, s: &SynthSample, events: &evio::EventStream) -> Result<SampleRecord> {
    let id = &s.sample.id;
    let dir = root.join(id);
    std::fs::create_dir_all(&dir).at(&dir)?;
    let rel = |name: &str| format!("{id}/{name}");
    let put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).at(&p)
    };
    put("frame.pgm", imagery::write_pgm(&s.sample.frame))?;
    put("events.evt", evio::serialize_events(events, EventFormat::PackedBinary))?;
    put("flow.tns", imagery::write_tensor(&s.sample.flow.to_tensor()))?;
    put("depth.pfm", imagery::write_pfm(s.sample.depth.depth()))?;
    let clean = match &s.sample.clean {
        Some(c) => {
            put("clean.pgm", imagery::write_pgm(c))?;
            Some(rel("clean.pgm"))
        }
        None => None,
    };
    let p = &s.partition;
    put("extreme.pgm", imagery::write_pgm_mask(&p.extreme, p.height, p.width))?;
    Ok(SampleRecord {
        id: id.clone(),
        frame: rel("frame.pgm"),
        events: rel("events.evt"),
        flow: rel("flow.tns"),
        depth: rel("depth.pfm"),
        clean,
        extreme_mask: Some(rel("extreme.pgm")),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).at(path)
}
