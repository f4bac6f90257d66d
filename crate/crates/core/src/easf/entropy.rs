use super::{EasfError, Result};
use crate::evio::VoxelGrid;
use crate::imagery::{Field, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntropySource {
    Frame,
    Event,
}

/// Patch-grid entropy normalized to `[0, 1]` by `log2(bins)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyMap {
    pub data: Field,
    pub patch_size: usize,
    pub source: EntropySource,
}

/// Shannon entropy of a histogram in bits, divided by `log2(bins)`.
pub fn shannon_entropy_normalized(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.len() < 2 {
        return 0.0;
    }
    let total = total as f64;
    let bits: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    (bits / (counts.len() as f64).log2()).clamp(0.0, 1.0)
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

fn check(patch: usize, bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(EasfError::BadBins(bins));
    }
    if patch == 0 {
        return Err(EasfError::BadPatch);
    }
    Ok(())
}

/// Visits every patch of an `h × w` raster (edge patches may be smaller).
fn for_each_patch(h: usize, w: usize, patch: usize, mut f: impl FnMut(usize, usize, std::ops::Range<usize>, std::ops::Range<usize>) -> f64) -> Field {
    let (ph, pw) = (h.div_ceil(patch), w.div_ceil(patch));
    let mut out = Field::zeros(ph, pw);
    for py in 0..ph {
        for px in 0..pw {
            let rows = py * patch..((py + 1) * patch).min(h);
            let cols = px * patch..((px + 1) * patch).min(w);
            out[(py, px)] = f(py, px, rows, cols);
        }
    }
    out
}

pub fn patch_entropy_frame(img: &Image, patch: usize, bins: usize) -> Result<EntropyMap> {
    check(patch, bins)?;
    let (h, w) = img.shape();
    let field = img.field();
    let mut counts = vec![0u64; bins];
    let data = for_each_patch(h, w, patch, |_, _, rows, cols| {
        counts.iter_mut().for_each(|c| *c = 0);
        for y in rows {
            for x in cols.clone() {
                counts[bin_of(field[(y, x)], bins)] += 1;
            }
        }
        shannon_entropy_normalized(&counts)
    });
    Ok(EntropyMap { data, patch_size: patch, source: EntropySource::Frame })
}

/// Histogram over `|V| / max|V|` pooled across every temporal bin of the patch.
/// An all-zero grid has entropy 0 everywhere.
pub fn patch_entropy_event(vox: &VoxelGrid, patch: usize, bins: usize) -> Result<EntropyMap> {
    check(patch, bins)?;
    let (h, w) = (vox.height(), vox.width());
    let peak = vox.max_abs();
    let mut counts = vec![0u64; bins];
    let data = for_each_patch(h, w, patch, |_, _, rows, cols| {
        if peak == 0.0 {
            return 0.0;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for b in 0..vox.bins() {
            for y in rows.clone() {
                for x in cols.clone() {
                    counts[bin_of(vox.get(b, y, x).abs() / peak, bins)] += 1;
                }
            }
        }
        shannon_entropy_normalized(&counts)
    });
    Ok(EntropyMap { data, patch_size: patch, source: EntropySource::Event })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn image(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> Image {
        Image::new(Field::from_fn(h, w, f)).unwrap()
    }

    #[test]
    fn constant_patch_has_zero_entropy() {
        let e = patch_entropy_frame(&image(8, 8, |_, _| 0.4), 4, 32).unwrap();
        assert_eq!(e.data.shape(), (2, 2));
        assert!(e.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_black_half_white_is_one() {
        let e = patch_entropy_frame(&image(4, 4, |_, x| if x < 2 { 0.0 } else { 1.0 }), 4, 2).unwrap();
        assert_eq!(e.data.data(), &[1.0]);
    }

    #[test]
    fn four_level_patch() {
        // Counts (8, 4, 2, 2) over 16 pixels: 1.75 bits / log2(4).
        let levels = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.3, 0.3, 0.3, 0.3, 0.6, 0.6, 0.9, 0.9];
        let e = patch_entropy_frame(&image(4, 4, |y, x| levels[y * 4 + x]), 4, 4).unwrap();
        assert!((e.data.data()[0] - 0.875).abs() < 1e-15);
    }

    #[test]
    fn edge_patches_may_be_smaller() {
        let e = patch_entropy_frame(&image(5, 7, |y, x| ((x + y) % 2) as f64), 4, 2).unwrap();
        assert_eq!(e.data.shape(), (2, 2));
        // Bottom-right patch is 1x3: two of one colour, one of the other.
        let p: f64 = 1.0 / 3.0;
        let expect = -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        assert!((e.data[(1, 1)] - expect).abs() < 1e-12);
    }

    #[test]
    fn bad_bins() {
        assert!(matches!(patch_entropy_frame(&image(2, 2, |_, _| 0.0), 2, 1), Err(EasfError::BadBins(1))));
        assert!(matches!(patch_entropy_event(&VoxelGrid::zeros(1, 2, 2), 2, 0), Err(EasfError::BadBins(0))));
    }

    #[test]
    fn zero_voxels_have_zero_entropy() {
        let e = patch_entropy_event(&VoxelGrid::zeros(3, 8, 8), 4, 8).unwrap();
        assert!(e.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_equally_frequent_magnitudes() {
        let data: Vec<f64> = (0..2 * 4 * 4).map(|i| if i % 2 == 0 { 0.0 } else { -2.0 }).collect();
        let vox = VoxelGrid::from_data(2, 4, 4, data).unwrap();
        let e = patch_entropy_event(&vox, 4, 2).unwrap();
        assert_eq!(e.data.data(), &[1.0]);
    }

    #[test]
    fn sparse_voxels_match_histogram_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (b, h, w, patch, bins) = (3, 10, 10, 4, 8);
        let data: Vec<f64> = (0..b * h * w)
            .map(|_| if rng.random_bool(0.15) { rng.random_range(-3.0..3.0) } else { 0.0 })
            .collect();
        let vox = VoxelGrid::from_data(b, h, w, data.clone()).unwrap();
        let got = patch_entropy_event(&vox, patch, bins).unwrap();

        let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for py in 0..3 {
            for px in 0..3 {
                let mut hist = std::collections::BTreeMap::<usize, f64>::new();
                let mut n = 0.0;
                for k in 0..b {
                    for y in py * patch..(py * patch + patch).min(h) {
                        for x in px * patch..(px * patch + patch).min(w) {
                            let v = data[(k * h + y) * w + x].abs() / peak;
                            let idx = ((v * bins as f64) as usize).min(bins - 1);
                            *hist.entry(idx).or_default() += 1.0;
                            n += 1.0;
                        }
                    }
                }
                let ent: f64 = hist.values().map(|c| -(c / n) * (c / n).ln()).sum::<f64>() / (bins as f64).ln();
                assert!((got.data[(py, px)] - ent).abs() <= 1e-9);
            }
        }
    }
}
