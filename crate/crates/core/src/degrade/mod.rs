//! Synthetic adverse-condition generation: contrast stretching towards
//! over/underexposure, motion blur by frame averaging, and the
//! extreme/normal illumination partition used for region-wise evaluation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evio::EventStream;
use crate::imagery::{write_pgm, write_pgm_mask, Field, Image, ImageryError};

/// Pixels within this distance of 0 or 1 after stretching count as extreme.
pub const CLIP_MARGIN: f64 = 1.0 / 255.0;
pub const ALPHA_RANGE: (f64, f64) = (1.8, 3.0);
pub const OFFSET_MAGNITUDE: f64 = 0.35;

#[derive(Debug, thiserror::Error)]
pub enum DegradeError {
    #[error("stretch factor must be positive, got {0}")]
    BadAlpha(f64),
    #[error("offset {0} outside [-0.5, 0.5]")]
    BadOffset(f64),
    #[error("blur window must be at least 1")]
    BadWindow,
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    ShapeMismatch { index: usize, expected: (usize, usize), got: (usize, usize) },
    #[error("expected {expected} frames for the blur window, got {got}")]
    WindowMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Imagery(#[from] ImageryError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DegradeError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeRecipe {
    pub alpha: f64,
    #[serde(default)]
    pub offset: f64,
    pub blur_frames: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DegradeRecipe {
    pub fn identity() -> Self {
        Self { alpha: 1.0, offset: 0.0, blur_frames: 1, seed: 0 }
    }

    /// Draws `alpha ~ U[1.8, 3.0]` and an offset of ±0.35 with equal odds.
    pub fn sample(seed: u64, blur_frames: usize) -> Self {
        let mut rng = crate::rng::substream(seed, "degrade/recipe");
        let alpha = rng.random_range(ALPHA_RANGE.0..=ALPHA_RANGE.1);
        let offset = if rng.random_bool(0.5) { OFFSET_MAGNITUDE } else { -OFFSET_MAGNITUDE };
        Self { alpha, offset, blur_frames, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(DegradeError::BadAlpha(self.alpha));
        }
        if !(-0.5..=0.5).contains(&self.offset) {
            return Err(DegradeError::BadOffset(self.offset));
        }
        if self.blur_frames == 0 {
            return Err(DegradeError::BadWindow);
        }
        Ok(())
    }
}

/// Exact split of the image into extreme-illumination and normal pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    pub height: usize,
    pub width: usize,
    pub extreme: Vec<bool>,
}

impl RegionPartition {
    pub fn all_normal(height: usize, width: usize) -> Self {
        Self { height, width, extreme: vec![false; height * width] }
    }

    pub fn normal(&self) -> Vec<bool> {
        self.extreme.iter().map(|&e| !e).collect()
    }

    pub fn extreme_fraction(&self) -> f64 {
        self.extreme.iter().filter(|&&e| e).count() as f64 / self.extreme.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stretched {
    pub image: Image,
    pub partition: RegionPartition,
    /// Fraction of pixels whose unclipped value left `[0, 1]`.
    pub clipped_fraction: f64,
}

/// `I_out = clip(0.5 + offset + alpha (I_in - 0.5), 0, 1)`.
///
/// A pixel is extreme when it clipped or landed within 1/255 of either end.
/// `alpha = 1, offset = 0` returns the input unchanged.
pub fn stretch_illumination(img: &Image, alpha: f64, offset: f64) -> Result<Stretched> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(DegradeError::BadAlpha(alpha));
    }
    let (h, w) = img.shape();
    let identity = alpha == 1.0 && offset == 0.0;
    let mut out = Vec::with_capacity(h * w);
    let mut extreme = Vec::with_capacity(h * w);
    let mut clipped = 0usize;
    for &v in img.data() {
        let raw = if identity { v } else { (0.5 + offset) + alpha * (v - 0.5) };
        let was_clipped = !(0.0..=1.0).contains(&raw);
        let o = raw.clamp(0.0, 1.0);
        clipped += was_clipped as usize;
        extreme.push(was_clipped || o < CLIP_MARGIN || o > 1.0 - CLIP_MARGIN);
        out.push(o);
    }
    Ok(Stretched {
        image: Image::new(Field::new(h, w, out)?)?,
        partition: RegionPartition { height: h, width: w, extreme },
        clipped_fraction: clipped as f64 / (h * w).max(1) as f64,
    })
}

/// Pixelwise mean over the exposure window.
pub fn synthesize_blur(frames: &[Image]) -> Result<Image> {
    let first = frames.first().ok_or(DegradeError::EmptySequence)?;
    let shape = first.shape();
    let mut acc = vec![0.0; shape.0 * shape.1];
    for (index, f) in frames.iter().enumerate() {
        if f.shape() != shape {
            return Err(DegradeError::ShapeMismatch { index, expected: shape, got: f.shape() });
        }
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v;
        }
    }
    let k = frames.len() as f64;
    let data = acc.into_iter().map(|s| (s / k).clamp(0.0, 1.0)).collect();
    Ok(Image::new(Field::new(shape.0, shape.1, data)?)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPaths {
    pub degraded: String,
    pub clean: String,
    pub extreme_mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeManifest {
    pub version: String,
    pub seed: u64,
    pub source_id: String,
    pub alpha: f64,
    pub offset: f64,
    #[serde(rename = "K")]
    pub blur_frames: usize,
    pub clipped_fraction: f64,
    pub extreme_fraction: f64,
    pub paths: Option<ManifestPaths>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegradedPair {
    pub degraded: Image,
    /// Sharp frame at the centre of the exposure window.
    pub clean: Image,
    pub partition: RegionPartition,
    pub events: EventStream,
    pub manifest: DegradeManifest,
}

/// Blurs the exposure window, then stretches illumination.
pub fn make_degraded_pair(source_id: &str, clean_frames: &[Image], events: &EventStream, recipe: &DegradeRecipe) -> Result<DegradedPair> {
    recipe.validate()?;
    if clean_frames.is_empty() {
        return Err(DegradeError::EmptySequence);
    }
    if clean_frames.len() != recipe.blur_frames {
        return Err(DegradeError::WindowMismatch { expected: recipe.blur_frames, got: clean_frames.len() });
    }
    let blurred = synthesize_blur(clean_frames)?;
    let stretched = stretch_illumination(&blurred, recipe.alpha, recipe.offset)?;
    let manifest = DegradeManifest {
        version: crate::VERSION.to_string(),
        seed: recipe.seed,
        source_id: source_id.to_string(),
        alpha: recipe.alpha,
        offset: recipe.offset,
        blur_frames: recipe.blur_frames,
        clipped_fraction: stretched.clipped_fraction,
        extreme_fraction: stretched.partition.extreme_fraction(),
        paths: None,
    };
    Ok(DegradedPair {
        degraded: stretched.image,
        clean: clean_frames[clean_frames.len() / 2].clone(),
        partition: stretched.partition,
        events: events.clone(),
        manifest,
    })
}

/// Writes `<id>_degraded.pgm`, `<id>_clean.pgm`, `<id>_extreme.pgm` and
/// `<id>_manifest.json` into `dir`; returns the manifest with paths filled in.
pub fn write_degraded_pair(dir: &Path, pair: &DegradedPair) -> Result<DegradeManifest> {
    let id = &pair.manifest.source_id;
    let paths = ManifestPaths {
        degraded: format!("{id}_degraded.pgm"),
        clean: format!("{id}_clean.pgm"),
        extreme_mask: format!("{id}_extreme.pgm"),
    };
    std::fs::write(dir.join(&paths.degraded), write_pgm(&pair.degraded)).map_err(ImageryError::from)?;
    std::fs::write(dir.join(&paths.clean), write_pgm(&pair.clean)).map_err(ImageryError::from)?;
    let p = &pair.partition;
    std::fs::write(dir.join(&paths.extreme_mask), write_pgm_mask(&p.extreme, p.height, p.width)).map_err(ImageryError::from)?;
    let mut manifest = pair.manifest.clone();
    manifest.paths = Some(paths);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join(format!("{id}_manifest.json")), text).map_err(ImageryError::from)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> Image {
        Image::new(Field::from_fn(h, w, f)).unwrap()
    }

    #[test]
    fn mid_grey_is_a_fixed_point() {
        for alpha in [0.3, 1.0, 2.0, 7.5] {
            let s = stretch_illumination(&img(1, 1, |_, _| 0.5), alpha, 0.0).unwrap();
            assert_eq!(s.image.data(), &[0.5]);
        }
    }

    #[test]
    fn bright_pixel_clips() {
        let s = stretch_illumination(&img(1, 2, |_, x| [0.9, 0.3][x]), 2.0, 0.0).unwrap();
        assert_eq!(s.image.data()[0], 1.0);
        assert!(s.partition.extreme[0]);
        assert!((s.image.data()[1] - 0.1).abs() < 1e-12);
        assert!(!s.partition.extreme[1]);
        assert_eq!(s.clipped_fraction, 0.5);
    }

    #[test]
    fn bad_alpha() {
        assert!(matches!(stretch_illumination(&img(1, 1, |_, _| 0.2), 0.0, 0.0), Err(DegradeError::BadAlpha(_))));
        assert!(matches!(stretch_illumination(&img(1, 1, |_, _| 0.2), -1.0, 0.0), Err(DegradeError::BadAlpha(_))));
    }

    #[test]
    fn blur_examples() {
        let a = img(2, 3, |y, x| (y * 3 + x) as f64 / 10.0);
        assert_eq!(synthesize_blur(std::slice::from_ref(&a)).unwrap(), a);
        let mean = synthesize_blur(&[img(2, 2, |_, _| 0.0), img(2, 2, |_, _| 1.0)]).unwrap();
        assert!(mean.data().iter().all(|&v| v == 0.5));
        assert!(matches!(synthesize_blur(&[]), Err(DegradeError::EmptySequence)));
        assert!(matches!(
            synthesize_blur(&[img(2, 2, |_, _| 0.0), img(2, 3, |_, _| 0.0)]),
            Err(DegradeError::ShapeMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn moving_bar_smears_over_four_pixels() {
        let frames: Vec<Image> = (0..4).map(|k| img(3, 10, |_, x| (x == 3 + k) as u8 as f64)).collect();
        let b = synthesize_blur(&frames).unwrap();
        for y in 0..3 {
            for x in 0..10 {
                let expect = if (3..7).contains(&x) { 0.25 } else { 0.0 };
                assert_eq!(b.field()[(y, x)], expect);
            }
        }
    }

    #[test]
    fn identity_recipe_is_bit_exact() {
        let clean = img(8, 8, |y, x| 0.01 + 0.98 * ((y * 8 + x) as f64 / 63.0));
        let pair = make_degraded_pair("s0", std::slice::from_ref(&clean), &EventStream::empty(8, 8), &DegradeRecipe::identity()).unwrap();
        assert_eq!(pair.degraded, clean);
        assert!(pair.partition.extreme.iter().all(|&e| !e));
        assert_eq!(pair.manifest.clipped_fraction, 0.0);
    }

    #[test]
    fn ramp_clip_boundary_matches_closed_form() {
        let n = 301;
        let ramp = img(1, n, |_, x| x as f64 / (n - 1) as f64);
        let s = stretch_illumination(&ramp, 3.0, 0.0).unwrap();
        let predicted = (0..n).filter(|&x| (x as f64 / (n - 1) as f64 - 0.5).abs() > 1.0 / 6.0).count();
        let clipped = (s.clipped_fraction * n as f64).round() as i64;
        assert!((clipped - predicted as i64).abs() <= 1);
    }

    #[test]
    fn recipe_sampling_is_deterministic_and_in_range() {
        for seed in 0..50 {
            let r = DegradeRecipe::sample(seed, 3);
            assert_eq!(r, DegradeRecipe::sample(seed, 3));
            assert!((ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&r.alpha));
            assert_eq!(r.offset.abs(), OFFSET_MAGNITUDE);
            r.validate().unwrap();
        }
    }

    #[test]
    fn written_outputs_are_reproducible() {
        let frames: Vec<Image> = (0..3).map(|k| img(6, 6, |y, x| ((x + y + k) % 5) as f64 / 4.0)).collect();
        let recipe = DegradeRecipe::sample(42, 3);
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let pair = make_degraded_pair("a", &frames, &EventStream::empty(6, 6), &recipe).unwrap();
            write_degraded_pair(dir.path(), &pair).unwrap();
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
                })
                .collect();
            files.sort();
            files
        };
        let a = run();
        assert_eq!(a.len(), 4);
        assert_eq!(a, run());
    }

    proptest! {
        #[test]
        fn stretch_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, alpha in 0.05f64..6.0, offset in -0.5f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = stretch_illumination(&img(1, 2, |_, x| [lo, hi][x]), alpha, offset).unwrap();
            prop_assert!(s.image.data()[0] <= s.image.data()[1]);
        }

        #[test]
        fn unit_alpha_is_identity(v in 0.0f64..=1.0) {
            let s = stretch_illumination(&img(1, 1, |_, _| v), 1.0, 0.0).unwrap();
            prop_assert_eq!(s.image.data()[0], v);
        }

        #[test]
        fn blur_is_bounded_by_inputs(vals in proptest::collection::vec(0.0f64..=1.0, 1..6)) {
            let frames: Vec<Image> = vals.iter().map(|&v| img(1, 1, |_, _| v)).collect();
            let out = synthesize_blur(&frames).unwrap().data()[0];
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out >= lo - 1e-15 && out <= hi + 1e-15);
        }
    }
}
