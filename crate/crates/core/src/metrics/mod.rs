//! Depth evaluation: AbsRel, threshold accuracy, edge gradient error and MAE,
//! plus the region-partitioned report.

mod report;

pub use report::{aggregate, evaluate, median_scale, table_csv, table_text, Alignment, EvalOptions, EvalReport, RegionMetrics};

use crate::imagery::{depth_gradient, DepthMap, ImageryError};

/// Default edge threshold as a fraction of the ground-truth valid depth range.
pub const EDGE_FRACTION: f64 = 0.05;
pub const DEFAULT_MAE_CAP_M: f64 = 30.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("evaluation mask selects no valid pixel")]
    EmptyMask,
    #[error("no ground-truth gradient exceeds the edge threshold; EGE undefined")]
    NoEdges,
    #[error("threshold index must be 1, 2 or 3, got {0}")]
    BadThresholdIndex(u32),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error(transparent)]
    Imagery(#[from] ImageryError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check_shapes(pred: &DepthMap, gt: &DepthMap, mask: Option<&[bool]>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(MetricsError::ShapeMismatch(pred.shape(), gt.shape()));
    }
    if let Some(m) = mask {
        if m.len() != gt.valid().len() {
            return Err(MetricsError::ShapeMismatch(gt.shape(), (m.len(), 1)));
        }
    }
    Ok(())
}

/// Pixels where the caller's mask is set and both maps are valid.
fn selected<'a>(pred: &'a DepthMap, gt: &'a DepthMap, mask: &'a [bool]) -> impl Iterator<Item = (f64, f64)> + 'a {
    mask.iter()
        .enumerate()
        .filter(move |&(i, &m)| m && gt.valid()[i] && pred.valid()[i])
        .map(move |(i, _)| (pred.depth().data()[i], gt.depth().data()[i]))
}

fn masked_mean(values: impl Iterator<Item = f64>) -> Result<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        Err(MetricsError::EmptyMask)
    } else {
        Ok(sum / n as f64)
    }
}

/// Mean of `|D - D*| / D*` over the mask.
pub fn absrel(pred: &DepthMap, gt: &DepthMap, mask: &[bool]) -> Result<f64> {
    check_shapes(pred, gt, Some(mask))?;
    masked_mean(selected(pred, gt, mask).map(|(d, g)| (d - g).abs() / g))
}

/// Fraction of pixels with `max(D/D*, D*/D) < 1.25^i`.
pub fn delta_acc(pred: &DepthMap, gt: &DepthMap, mask: &[bool], i: u32) -> Result<f64> {
    if !(1..=3).contains(&i) {
        return Err(MetricsError::BadThresholdIndex(i));
    }
    check_shapes(pred, gt, Some(mask))?;
    let bound = 1.25f64.powi(i as i32);
    masked_mean(selected(pred, gt, mask).map(|(d, g)| ((d / g).max(g / d) < bound) as u8 as f64))
}

/// Mean `|D - D*|` over mask pixels whose ground truth is within `cap_m`.
pub fn mae(pred: &DepthMap, gt: &DepthMap, mask: &[bool], cap_m: f64) -> Result<f64> {
    check_shapes(pred, gt, Some(mask))?;
    masked_mean(selected(pred, gt, mask).filter(|&(_, g)| g <= cap_m).map(|(d, g)| (d - g).abs()))
}

/// `G = 0.05 × (max − min)` over valid ground truth.
pub fn default_edge_threshold(gt: &DepthMap) -> Option<f64> {
    gt.valid_range().map(|(lo, hi)| EDGE_FRACTION * (hi - lo))
}

/// Edge gradient error: mean of `| |∇D| − |∇D*| | / |∇D*|` over pixels where
/// `|∇D*| > G`, using gradient magnitudes.
pub fn ege(pred: &DepthMap, gt: &DepthMap, threshold: f64) -> Result<f64> {
    check_shapes(pred, gt, None)?;
    let gp = depth_gradient(pred)?;
    let gg = depth_gradient(gt)?;
    let values = (0..gg.valid.len())
        .filter(|&i| gg.valid[i] && gp.valid[i] && gg.magnitude.data()[i] > threshold)
        .map(|i| {
            let g = gg.magnitude.data()[i];
            (gp.magnitude.data()[i] - g).abs() / g
        });
    masked_mean(values).map_err(|_| MetricsError::NoEdges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Field;
    use rand::{Rng, SeedableRng};

    fn map(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> DepthMap {
        DepthMap::new(Field::from_fn(h, w, f))
    }

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn identical_maps() {
        let gt = map(4, 4, |y, x| 1.0 + (y + 2 * x) as f64);
        assert_eq!(absrel(&gt, &gt, &all(16)).unwrap(), 0.0);
        for i in 1..=3 {
            assert_eq!(delta_acc(&gt, &gt, &all(16), i).unwrap(), 1.0);
        }
        assert_eq!(mae(&gt, &gt, &all(16), 30.0).unwrap(), 0.0);
        assert_eq!(ege(&gt, &gt, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn doubling_and_threshold_bracketing() {
        let gt = map(3, 3, |y, x| 2.0 + (y * 3 + x) as f64);
        assert!((absrel(&gt.scaled(2.0), &gt, &all(9)).unwrap() - 1.0).abs() < 1e-15);
        let p = gt.scaled(1.3);
        assert_eq!(delta_acc(&p, &gt, &all(9), 1).unwrap(), 0.0);
        assert_eq!(delta_acc(&p, &gt, &all(9), 2).unwrap(), 1.0);
        assert_eq!(delta_acc(&p, &gt, &all(9), 3).unwrap(), 1.0);
        assert!(matches!(delta_acc(&p, &gt, &all(9), 4), Err(MetricsError::BadThresholdIndex(4))));
    }

    #[test]
    fn empty_mask() {
        let gt = map(2, 2, |_, _| 1.0);
        assert!(matches!(absrel(&gt, &gt, &[false; 4]), Err(MetricsError::EmptyMask)));
    }

    #[test]
    fn mae_offset_and_cap() {
        let gt = map(4, 4, |_, x| if x < 2 { 10.0 } else { 50.0 });
        let pred = map(4, 4, |y, x| gt.depth()[(y, x)] + 0.5);
        assert!((mae(&pred, &gt, &all(16), 30.0).unwrap() - 0.5).abs() < 1e-12);
        // Far half is beyond the cap; corrupting it must not change the value.
        let pred2 = map(4, 4, |y, x| if x < 2 { pred.depth()[(y, x)] } else { 1000.0 });
        assert_eq!(mae(&pred2, &gt, &all(16), 30.0).unwrap(), mae(&pred, &gt, &all(16), 30.0).unwrap());
        let far_only = map(2, 2, |_, _| 40.0);
        assert!(matches!(mae(&far_only, &far_only, &all(4), 30.0), Err(MetricsError::EmptyMask)));
    }

    #[test]
    fn ege_doubled_gradients() {
        let gt = map(5, 6, |y, x| 1.0 + x as f64 + 0.5 * y as f64);
        let pred = map(5, 6, |y, x| 3.0 + 2.0 * x as f64 + 1.0 * y as f64);
        assert!((ege(&pred, &gt, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ege(&pred, &gt, 100.0), Err(MetricsError::NoEdges)));
    }

    #[test]
    fn ege_step_edge_matches_scalar_oracle() {
        let gt = map(8, 8, |_, x| if x < 4 { 2.0 } else { 6.0 });
        let pred = map(8, 8, |y, x| if x < 4 { 2.2 } else if x == 4 { 4.0 + 0.1 * y as f64 } else { 5.5 });
        let got = ege(&pred, &gt, 0.2).unwrap();
        // Oracle: explicit stencil magnitudes on every pixel.
        let grad = |d: &DepthMap, y: usize, x: usize| {
            let f = |yy: usize, xx: usize| d.depth()[(yy, xx)];
            let gx = if x == 0 { f(y, 1) - f(y, 0) } else if x == 7 { f(y, 7) - f(y, 6) } else { (f(y, x + 1) - f(y, x - 1)) / 2.0 };
            let gy = if y == 0 { f(1, x) - f(0, x) } else if y == 7 { f(7, x) - f(6, x) } else { (f(y + 1, x) - f(y - 1, x)) / 2.0 };
            (gx * gx + gy * gy).sqrt()
        };
        let (mut sum, mut n) = (0.0, 0.0);
        for y in 0..8 {
            for x in 0..8 {
                let g = grad(&gt, y, x);
                if g > 0.2 {
                    sum += (grad(&pred, y, x) - g).abs() / g;
                    n += 1.0;
                }
            }
        }
        assert!((got - sum / n).abs() <= 1e-9);
    }

    #[test]
    fn absrel_of_scaled_gt_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let gt = map(4, 4, |_, _| rng.random_range(0.5..50.0));
        for c in [0.25, 0.5, 2.0, 4.0] {
            let got = absrel(&gt.scaled(c), &gt, &all(16)).unwrap();
            assert!((got - (c - 1.0f64).abs()).abs() < 1e-15);
        }
    }
}
