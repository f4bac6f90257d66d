use super::{MgtcError, Result, EDGE_FRACTION};
use crate::imagery::{depth_gradient, dilate, warp_bilinear, DepthMap, Field, FlowField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Foreground,
    Background,
    Ignore,
}

impl Label {
    /// Grey level used by the tri-level PGM export.
    pub fn grey(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Ignore => 128,
            Label::Foreground => 255,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionLabels {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<Label>,
    pub blur_band: Vec<bool>,
}

impl RegionLabels {
    pub fn all_ignore(height: usize, width: usize) -> Self {
        Self { height, width, labels: vec![Label::Ignore; height * width], blur_band: vec![false; height * width] }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Binary PGM with 0 = background, 128 = ignore, 255 = foreground.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.labels.iter().map(|l| l.grey()));
        out
    }
}

/// `0.05 × (max − min)` over valid depth, or `None` without valid pixels.
pub fn default_edge_threshold(d: &DepthMap) -> Option<f64> {
    d.valid_range().map(|(lo, hi)| EDGE_FRACTION * (hi - lo))
}

/// Otsu's threshold computed exactly over the sorted sample values.
///
/// Returns the largest value of the lower class, maximizing the
/// between-class variance `n0 n1 (m0 - m1)^2`. `None` when all values are
/// equal or the slice is empty.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let total: f64 = v.iter().sum();
    let n = v.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    let mut lower_sum = 0.0;
    for k in 1..v.len() {
        lower_sum += v[k - 1];
        if v[k - 1] == v[k] {
            continue;
        }
        let n0 = k as f64;
        let n1 = n - n0;
        let m0 = lower_sum / n0;
        let m1 = (total - lower_sum) / n1;
        let score = n0 * n1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, v[k - 1]));
        }
    }
    best.map(|(_, t)| t)
}

/// Locates the foreground/background split inside the motion-blur band.
///
/// 1. depth gradient of the ground truth, thresholded into an edge mask;
/// 2. the edge mask is warped to every exposure instant in `timestamps`;
/// 3. the union of the warped masks, dilated by one pixel, is the blur band;
/// 4. valid band pixels are split by Otsu's threshold on depth: nearer is
///    foreground, farther is background. Everything else is ignored.
///
/// With no edge above threshold this returns [`MgtcError::EmptyEdges`];
/// callers fall back to [`RegionLabels::all_ignore`].
pub fn localize_regions(d_gt: &DepthMap, flow: &FlowField, timestamps: &[f64], edge_thresh: f64) -> Result<RegionLabels> {
    if timestamps.is_empty() {
        return Err(MgtcError::NoTimestamps);
    }
    if let Some(&t) = timestamps.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(MgtcError::BadTimestamp(t));
    }
    if !(edge_thresh > 0.0) {
        return Err(MgtcError::BadEdgeThreshold(edge_thresh));
    }
    let (h, w) = d_gt.shape();
    if flow.shape() != (h, w) {
        return Err(crate::imagery::ImageryError::ShapeMismatch {
            expected: vec![h, w],
            got: vec![flow.shape().0, flow.shape().1],
        }
        .into());
    }
    let grad = depth_gradient(d_gt)?;
    let edges: Vec<bool> = grad
        .magnitude
        .data()
        .iter()
        .zip(&grad.valid)
        .map(|(&m, &ok)| ok && m > edge_thresh)
        .collect();
    if !edges.iter().any(|&e| e) {
        return Err(MgtcError::EmptyEdges);
    }
    let edge_field = Field::new(h, w, edges.iter().map(|&e| e as u8 as f64).collect())?;

    let mut swept = vec![false; h * w];
    for &s in timestamps {
        let warped = warp_bilinear(&edge_field, flow, s)?;
        for ((acc, &v), &c) in swept.iter_mut().zip(warped.field.data()).zip(&warped.covered) {
            *acc |= c && v > 1e-9;
        }
    }
    let blur_band = dilate(&swept, h, w);

    let band_depths: Vec<f64> = (0..h * w)
        .filter(|&i| blur_band[i] && d_gt.valid()[i])
        .map(|i| d_gt.depth().data()[i])
        .collect();
    let split = otsu_threshold(&band_depths).unwrap_or(f64::INFINITY);
    let labels = (0..h * w)
        .map(|i| {
            if !blur_band[i] || !d_gt.valid()[i] {
                Label::Ignore
            } else if d_gt.depth().data()[i] <= split {
                Label::Foreground
            } else {
                Label::Background
            }
        })
        .collect();
    Ok(RegionLabels { height: h, width: w, labels, blur_band })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Near plane (depth 2) left of column 8, far plane (depth 10) from column 8.
    fn step_scene() -> DepthMap {
        DepthMap::new(Field::from_fn(16, 16, |_, x| if x < 8 { 2.0 } else { 10.0 }))
    }

    fn band_columns(r: &RegionLabels) -> Vec<usize> {
        (0..16).filter(|&x| (0..16).all(|y| r.blur_band[y * 16 + x])).collect()
    }

    #[test]
    fn zero_flow_band_is_dilated_edge() {
        let d = step_scene();
        let r = localize_regions(&d, &FlowField::zeros(16, 16), &[0.0], 0.4).unwrap();
        // Central differences mark columns 7 and 8; dilation adds 6 and 9.
        assert_eq!(band_columns(&r), vec![6, 7, 8, 9]);
        assert!(r.blur_band.iter().enumerate().all(|(i, &b)| b == (6..=9).contains(&(i % 16))));
        for y in 0..16 {
            assert_eq!(r.labels[y * 16 + 6], Label::Foreground);
            assert_eq!(r.labels[y * 16 + 7], Label::Foreground);
            assert_eq!(r.labels[y * 16 + 8], Label::Background);
            assert_eq!(r.labels[y * 16 + 9], Label::Background);
            assert_eq!(r.labels[y * 16], Label::Ignore);
        }
    }

    #[test]
    fn constant_flow_sweeps_the_edge() {
        let d = step_scene();
        let r = localize_regions(&d, &FlowField::constant(16, 16, 2.0, 0.0), &[-1.0, 0.0, 1.0], 0.4).unwrap();
        // Hand construction: edge columns {7, 8} shifted by -2, 0, +2 give
        // {5, 6, 7, 8, 9, 10}; dilation widens that to 4..=11.
        assert_eq!(band_columns(&r), (4..=11).collect::<Vec<_>>());
        assert_eq!(r.blur_band.iter().filter(|&&b| b).count(), 16 * 8);
        let fg = (0..16).filter(|&x| r.labels[x] == Label::Foreground).collect::<Vec<_>>();
        let bg = (0..16).filter(|&x| r.labels[x] == Label::Background).collect::<Vec<_>>();
        assert_eq!(fg, vec![4, 5, 6, 7]);
        assert_eq!(bg, vec![8, 9, 10, 11]);
    }

    #[test]
    fn constant_depth_has_no_edges() {
        let d = DepthMap::new(Field::filled(8, 8, 3.0));
        let r = localize_regions(&d, &FlowField::zeros(8, 8), &[0.0], 0.1);
        assert!(matches!(r, Err(MgtcError::EmptyEdges)));
        let fallback = RegionLabels::all_ignore(8, 8);
        assert_eq!(fallback.count(Label::Ignore), 64);
    }

    #[test]
    fn argument_validation() {
        let d = step_scene();
        let flow = FlowField::zeros(16, 16);
        assert!(matches!(localize_regions(&d, &flow, &[], 0.4), Err(MgtcError::NoTimestamps)));
        assert!(matches!(localize_regions(&d, &flow, &[1.5], 0.4), Err(MgtcError::BadTimestamp(_))));
        assert!(matches!(localize_regions(&d, &flow, &[0.0], 0.0), Err(MgtcError::BadEdgeThreshold(_))));
        assert!(localize_regions(&d, &FlowField::zeros(8, 8), &[0.0], 0.4).is_err());
    }

    #[test]
    fn invalid_depth_is_ignored() {
        let mut f = step_scene().depth().clone();
        f[(3, 7)] = 0.0;
        let d = DepthMap::new(f);
        let r = localize_regions(&d, &FlowField::zeros(16, 16), &[0.0], 0.4).unwrap();
        assert_eq!(r.labels[3 * 16 + 7], Label::Ignore);
    }

    #[test]
    fn otsu_splits_bimodal_samples() {
        assert_eq!(otsu_threshold(&[1.0, 1.1, 0.9, 5.0, 5.2, 4.9]), Some(1.1));
        assert_eq!(otsu_threshold(&[2.0, 2.0]), None);
        assert_eq!(otsu_threshold(&[]), None);
    }

    #[test]
    fn pgm_export_levels() {
        let r = RegionLabels {
            height: 1,
            width: 3,
            labels: vec![Label::Background, Label::Ignore, Label::Foreground],
            blur_band: vec![true, false, true],
        };
        assert!(r.to_pgm().ends_with(&[0, 128, 255]));
    }

    proptest::proptest! {
        #[test]
        fn labels_partition_the_band(
            u in -3.0f64..3.0, v in -3.0f64..3.0,
            cx in 3usize..13, cy in 3usize..13, r in 2usize..5,
            near in 1.0f64..4.0, far in 6.0f64..20.0,
        ) {
            let d = DepthMap::new(Field::from_fn(16, 16, |y, x| {
                let inside = (y as i64 - cy as i64).abs() <= r as i64 && (x as i64 - cx as i64).abs() <= r as i64;
                if inside { near } else { far }
            }));
            let thr = default_edge_threshold(&d).unwrap();
            let out = localize_regions(&d, &FlowField::constant(16, 16, u, v), &super::super::DEFAULT_TIMESTAMPS, thr).unwrap();
            for i in 0..256 {
                match out.labels[i] {
                    Label::Foreground | Label::Background => proptest::prop_assert!(out.blur_band[i]),
                    Label::Ignore => proptest::prop_assert!(!out.blur_band[i]),
                }
                if out.labels[i] == Label::Foreground {
                    proptest::prop_assert_eq!(d.depth().data()[i], near);
                }
            }
        }
    }
}
