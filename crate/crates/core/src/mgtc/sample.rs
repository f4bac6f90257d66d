use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Label, MgtcError, RegionLabels, Result};
use crate::tensor::{FeatureMap, Tensor};

const MIN_NORM: f64 = 1e-8;

/// Unit-norm feature rows with their labels, plus the bookkeeping needed to
/// route gradients back to the feature map they were sampled from.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch {
    /// `N × dim`, row-major, every row unit norm.
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<Label>,
    pub tau: f64,
    /// Spatial index of each row in the source feature map.
    pub locations: Vec<usize>,
    /// Norm of each row before normalization.
    pub norms: Vec<f64>,
}

impl ContrastiveBatch {
    /// Builds a batch from explicit rows, normalizing each one.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<Label>, tau: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        let mut norms = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(MgtcError::ShapeMismatch { expected: dim, got: r.len() });
            }
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            features.extend(r.iter().map(|v| v / n));
            norms.push(n);
        }
        Ok(Self { features, dim, labels, tau, locations: (0..rows.len()).collect(), norms })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Back-propagates a gradient on the unit rows through the normalization
    /// and accumulates it into `grad` (same shape as the sampled feature map).
    pub fn scatter_gradient(&self, grad_unit: &[f64], grad: &mut Tensor) {
        let (c, h, w) = grad.dims3();
        debug_assert_eq!(c, self.dim);
        let plane = h * w;
        let g = grad.data_mut();
        for (i, (&loc, &norm)) in self.locations.iter().zip(&self.norms).enumerate() {
            let u = &self.features[i * c..(i + 1) * c];
            let gu = &grad_unit[i * c..(i + 1) * c];
            let along: f64 = u.iter().zip(gu).map(|(a, b)| a * b).sum();
            for k in 0..c {
                g[k * plane + loc] += (gu[k] - along * u[k]) / norm;
            }
        }
    }
}

/// Majority vote of the labels covering each cell of an `h × w` grid. Ties
/// resolve to `Ignore`.
pub fn downsample_labels(labels: &RegionLabels, h: usize, w: usize) -> Vec<Label> {
    let (lh, lw) = (labels.height, labels.width);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let rows = y * lh / h..((y + 1) * lh / h).max(y * lh / h + 1);
        for x in 0..w {
            let cols = x * lw / w..((x + 1) * lw / w).max(x * lw / w + 1);
            let mut counts = [0usize; 3];
            for yy in rows.clone() {
                for xx in cols.clone() {
                    counts[match labels.labels[yy * lw + xx] {
                        Label::Foreground => 0,
                        Label::Background => 1,
                        Label::Ignore => 2,
                    }] += 1;
                }
            }
            let label = if counts[0] > counts[1] && counts[0] > counts[2] {
                Label::Foreground
            } else if counts[1] > counts[0] && counts[1] > counts[2] {
                Label::Background
            } else {
                Label::Ignore
            };
            out.push(label);
        }
    }
    out
}

/// Seeded sampling of up to `max_per_class` labelled locations per class.
///
/// Labels are brought to the feature resolution by majority vote; locations
/// whose feature vector is (numerically) zero are skipped. Fails with
/// [`MgtcError::ClassUnderflow`] when either class ends up with fewer than 2
/// samples.
pub fn sample_batch(features: &FeatureMap, labels: &RegionLabels, max_per_class: usize, seed: u64, tau: f64) -> Result<ContrastiveBatch> {
    if max_per_class < 2 {
        return Err(MgtcError::BadMaxPerClass);
    }
    let (c, h, w) = features.dims3();
    let plane = h * w;
    let small = downsample_labels(labels, h, w);
    let data = features.data();
    let norm_at = |l: usize| (0..c).map(|k| data[k * plane + l].powi(2)).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |class: Label| {
        let mut idx: Vec<usize> = (0..plane).filter(|&l| small[l] == class && norm_at(l) >= MIN_NORM).collect();
        idx.shuffle(&mut rng);
        idx.truncate(max_per_class);
        idx
    };
    let fg = pick(Label::Foreground);
    let bg = pick(Label::Background);
    if fg.len() < 2 || bg.len() < 2 {
        return Err(MgtcError::ClassUnderflow { foreground: fg.len(), background: bg.len() });
    }

    let mut out = ContrastiveBatch {
        features: Vec::with_capacity((fg.len() + bg.len()) * c),
        dim: c,
        labels: Vec::with_capacity(fg.len() + bg.len()),
        tau,
        locations: Vec::with_capacity(fg.len() + bg.len()),
        norms: Vec::with_capacity(fg.len() + bg.len()),
    };
    for (class, locs) in [(Label::Foreground, &fg), (Label::Background, &bg)] {
        for &l in locs {
            let n = norm_at(l);
            out.features.extend((0..c).map(|k| data[k * plane + l] / n));
            out.labels.push(class);
            out.locations.push(l);
            out.norms.push(n);
        }
    }
    Ok(out)
}
