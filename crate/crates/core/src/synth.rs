//! Procedural scenes for experiments: layered depth, hazy textured
//! intensity, lateral camera motion, sub-frames, and events generated from
//! log-intensity changes of the clean high-dynamic-range rendering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::{make_degraded_pair, DegradeError, DegradeRecipe, RegionPartition};
use crate::evio::{self, Event, EventStream, Polarity};
use crate::fusenet::TrainSample;
use crate::imagery::{DepthMap, Field, FlowField, Image};
use crate::rng::{derive_seed, substream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub bins: usize,
    /// Sub-frames averaged into the blurred frame; odd so the centre frame
    /// sits at the reference time.
    pub blur_frames: usize,
    /// Rendering steps used for event generation.
    pub event_steps: usize,
    /// Log-intensity contrast threshold.
    pub contrast: f64,
    pub exposure_us: u64,
    pub max_objects: usize,
    /// Image shift in pixels at depth 1 over half the exposure.
    pub parallax: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            bins: evio::DEFAULT_BINS,
            blur_frames: 9,
            event_steps: 24,
            contrast: 0.1,
            exposure_us: 10_000,
            max_objects: 4,
            parallax: 6.0,
        }
    }
}

impl SceneConfig {
    /// Describes the first unusable setting.
    pub fn validate(&self) -> Result<(), String> {
        if self.height < 8 || self.width < 8 {
            return Err(format!("scene must be at least 8x8, got {}x{}", self.height, self.width));
        }
        if self.bins == 0 || self.event_steps == 0 || self.exposure_us == 0 {
            return Err("bins, event_steps and exposure_us must be positive".into());
        }
        if self.blur_frames % 2 == 0 {
            return Err(format!("blur_frames must be odd, got {}", self.blur_frames));
        }
        if !(self.contrast > 0.0 && self.parallax.is_finite()) {
            return Err("contrast must be positive and parallax finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Texture {
    waves: [(f64, f64, f64); 3],
    base: f64,
    amplitude: f64,
}

impl Texture {
    fn random(rng: &mut impl Rng) -> Self {
        let waves = std::array::from_fn(|_| {
            let f = rng.random_range(0.25..0.9);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            (f * theta.cos(), f * theta.sin(), rng.random_range(0.0..std::f64::consts::TAU))
        });
        Self { waves, base: rng.random_range(0.1..0.9), amplitude: rng.random_range(0.08..0.3) }
    }

    fn albedo(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self.waves.iter().map(|(fx, fy, ph)| (fx * x + fy * y + ph).sin()).sum::<f64>() / 3.0;
        (self.base + self.amplitude * s).clamp(0.02, 0.98)
    }
}

#[derive(Clone, Debug)]
struct Object {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    ellipse: bool,
    depth: f64,
    texture: Texture,
}

impl Object {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        if self.ellipse {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    }
}

/// Scene description; rendering is a pure function of it and a time.
#[derive(Clone, Debug)]
struct Layout {
    h: usize,
    w: usize,
    far: f64,
    near: f64,
    background: Texture,
    /// Sorted nearest first.
    objects: Vec<Object>,
    /// Camera motion direction scaled by the parallax gain.
    motion: (f64, f64),
    haze: f64,
    airlight: f64,
}

impl Layout {
    fn random(rng: &mut impl Rng, cfg: &SceneConfig) -> Self {
        let (h, w) = (cfg.height as f64, cfg.width as f64);
        let n = rng.random_range(1..=cfg.max_objects.max(1));
        let mut objects: Vec<Object> = (0..n)
            .map(|_| Object {
                cx: rng.random_range(0.15 * w..0.85 * w),
                cy: rng.random_range(0.2 * h..0.85 * h),
                rx: rng.random_range(0.1 * w..0.25 * w),
                ry: rng.random_range(0.1 * h..0.25 * h),
                ellipse: rng.random_bool(0.5),
                depth: rng.random_range(2.0..7.0),
                texture: Texture::random(rng),
            })
            .collect();
        objects.sort_by(|a, b| a.depth.total_cmp(&b.depth));
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let gain = cfg.parallax * rng.random_range(0.8..1.2);
        Self {
            h: cfg.height,
            w: cfg.width,
            far: rng.random_range(20.0..40.0),
            near: rng.random_range(8.0..12.0),
            background: Texture::random(rng),
            objects,
            motion: (sign * gain, rng.random_range(-0.3..0.3) * gain),
            haze: rng.random_range(0.03..0.1),
            airlight: rng.random_range(0.6..1.0),
        }
    }

    fn background_depth(&self, y: f64) -> f64 {
        let t = (y / (self.h - 1).max(1) as f64).clamp(0.0, 1.0);
        1.0 / (1.0 / self.far + t * (1.0 / self.near - 1.0 / self.far))
    }

    /// Depth and albedo seen at pixel `(x, y)` at time `s ∈ [-1, 1]`.
    fn sample(&self, x: f64, y: f64, s: f64) -> (f64, f64) {
        for o in &self.objects {
            let (ox, oy) = (x - s * self.motion.0 / o.depth, y - s * self.motion.1 / o.depth);
            if o.contains(ox, oy) {
                return (o.depth, o.texture.albedo(ox - o.cx, oy - o.cy));
            }
        }
        let d = self.background_depth(y);
        let (bx, by) = (x - s * self.motion.0 / d, y - s * self.motion.1 / d);
        (d, self.background.albedo(bx, by))
    }

    fn intensity(&self, depth: f64, albedo: f64) -> f64 {
        let t = (-self.haze * depth).exp();
        albedo * t + self.airlight * (1.0 - t)
    }

    fn render(&self, s: f64) -> Field {
        Field::from_fn(self.h, self.w, |y, x| {
            let (d, a) = self.sample(x as f64, y as f64, s);
            self.intensity(d, a)
        })
    }
}

/// A rendered scene: ground truth at the centre of the exposure plus the
/// exposure's sub-frames and events.
#[derive(Clone, Debug)]
pub struct Scene {
    pub id: String,
    pub depth: DepthMap,
    pub flow: FlowField,
    /// Sharp sub-frames spanning the exposure, oldest first.
    pub frames: Vec<Image>,
    pub events: EventStream,
}

impl Scene {
    /// The sharp frame at the reference time.
    pub fn reference(&self) -> &Image {
        &self.frames[self.frames.len() / 2]
    }
}

fn times(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if n == 1 { 0.0 } else { -1.0 + 2.0 * k as f64 / (n - 1) as f64 })
}

/// Simulates a sensor that fires whenever log intensity moves one contrast
/// step away from the per-pixel reference level.
fn simulate_events(layout: &Layout, cfg: &SceneConfig) -> EventStream {
    let steps = cfg.event_steps.max(1);
    let log = |f: &Field| f.map(|v| (v + 0.02).ln());
    let mut reference = log(&layout.render(-1.0));
    let mut prev = reference.clone();
    let dt = cfg.exposure_us as f64 / steps as f64;
    let mut events = Vec::new();
    for j in 1..=steps {
        let s = -1.0 + 2.0 * j as f64 / steps as f64;
        let cur = log(&layout.render(s));
        for y in 0..layout.h {
            for x in 0..layout.w {
                let (a, b) = (prev[(y, x)], cur[(y, x)]);
                let r = &mut reference[(y, x)];
                loop {
                    let (target, p) = if b - *r >= cfg.contrast {
                        (*r + cfg.contrast, Polarity::Positive)
                    } else if *r - b >= cfg.contrast {
                        (*r - cfg.contrast, Polarity::Negative)
                    } else {
                        break;
                    };
                    let frac = if b != a { ((target - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
                    let t = ((j - 1) as f64 + frac) * dt;
                    events.push(Event { t: t.round() as u64, x: x as u16, y: y as u16, p });
                    *r = target;
                }
            }
        }
        prev = cur;
    }
    EventStream::from_unsorted(layout.w as u32, layout.h as u32, events).expect("events lie on the sensor")
}

/// Renders scene `index` of the set identified by `master_seed`.
pub fn render_scene(master_seed: u64, index: usize, cfg: &SceneConfig) -> Scene {
    let id = format!("scene{index:04}");
    let mut rng = substream(derive_seed(master_seed, "synth/scene"), &id);
    let layout = Layout::random(&mut rng, cfg);
    let (h, w) = (cfg.height, cfg.width);
    let depth = Field::from_fn(h, w, |y, x| layout.sample(x as f64, y as f64, 0.0).0);
    let u = depth.map(|d| layout.motion.0 / d);
    let v = depth.map(|d| layout.motion.1 / d);
    let frames = times(cfg.blur_frames.max(1))
        .map(|s| Image::from_field_clamped(layout.render(s)))
        .collect();
    Scene {
        id,
        depth: DepthMap::new(depth),
        flow: FlowField::new(u, v).expect("finite flow"),
        frames,
        events: simulate_events(&layout, cfg),
    }
}

/// A training tuple together with what evaluation needs.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub sample: TrainSample,
    pub partition: RegionPartition,
    pub recipe: DegradeRecipe,
}

/// Motion blur plus an illumination stretch drawn from `recipe_seed`.
pub fn degraded_sample(scene: &Scene, cfg: &SceneConfig, recipe_seed: u64) -> Result<SynthSample, DegradeError> {
    let recipe = DegradeRecipe::sample(recipe_seed, scene.frames.len());
    let pair = make_degraded_pair(&scene.id, &scene.frames, &scene.events, &recipe)?;
    let voxels = evio::voxelize(&scene.events, cfg.bins).expect("bins validated by config");
    Ok(SynthSample {
        sample: TrainSample {
            id: scene.id.clone(),
            frame: pair.degraded,
            voxels,
            depth: scene.depth.clone(),
            flow: scene.flow.clone(),
            clean: Some(pair.clean),
        },
        partition: pair.partition,
        recipe,
    })
}

/// Motion blur only; illumination untouched.
pub fn blurred_sample(scene: &Scene, cfg: &SceneConfig) -> Result<SynthSample, DegradeError> {
    let recipe = DegradeRecipe { blur_frames: scene.frames.len(), ..DegradeRecipe::identity() };
    let pair = make_degraded_pair(&scene.id, &scene.frames, &scene.events, &recipe)?;
    let voxels = evio::voxelize(&scene.events, cfg.bins).expect("bins validated by config");
    Ok(SynthSample {
        sample: TrainSample {
            id: scene.id.clone(),
            frame: pair.degraded,
            voxels,
            depth: scene.depth.clone(),
            flow: scene.flow.clone(),
            clean: Some(pair.clean),
        },
        partition: pair.partition,
        recipe,
    })
}

/// The sharp reference frame, no degradation.
pub fn clean_sample(scene: &Scene, cfg: &SceneConfig) -> TrainSample {
    TrainSample {
        id: scene.id.clone(),
        frame: scene.reference().clone(),
        voxels: evio::voxelize(&scene.events, cfg.bins).expect("bins validated by config"),
        depth: scene.depth.clone(),
        flow: scene.flow.clone(),
        clean: None,
    }
}

/// Which degradation a generated set carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degradation {
    Clean,
    Blur,
    BlurAndIllumination,
}

/// Degrades one rendered scene as requested.
pub fn sample_scene(master_seed: u64, scene: &Scene, cfg: &SceneConfig, kind: Degradation) -> Result<SynthSample, DegradeError> {
    match kind {
        Degradation::Clean => {
            let sample = clean_sample(scene, cfg);
            let (h, w) = scene.depth.shape();
            Ok(SynthSample { sample, partition: RegionPartition::all_normal(h, w), recipe: DegradeRecipe::identity() })
        }
        Degradation::Blur => blurred_sample(scene, cfg),
        Degradation::BlurAndIllumination => {
            degraded_sample(scene, cfg, derive_seed(master_seed, &format!("synth/recipe/{}", scene.id)))
        }
    }
}

/// Scenes `first..first + count` of the set, degraded as requested.
pub fn generate(master_seed: u64, first: usize, count: usize, cfg: &SceneConfig, kind: Degradation) -> Result<Vec<SynthSample>, DegradeError> {
    (first..first + count)
        .map(|i| sample_scene(master_seed, &render_scene(master_seed, i, cfg), cfg, kind))
        .collect()
}
