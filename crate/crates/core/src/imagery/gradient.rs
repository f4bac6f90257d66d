use super::{DepthMap, Field, ImageryError, Result};

/// Spatial derivatives of a depth map.
///
/// `valid[i]` is false whenever any depth sample touched by the stencil at
/// `i` (including the centre) is invalid; gradients there are stored as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub gx: Field,
    pub gy: Field,
    pub magnitude: Field,
    pub valid: Vec<bool>,
}

/// Neighbour pair used by the 1D stencil at index `i` along an axis of length `n`
/// and the divisor that goes with it.
#[inline]
fn stencil(i: usize, n: usize) -> (usize, usize, f64) {
    if i == 0 {
        (0, 1, 1.0)
    } else if i == n - 1 {
        (n - 2, n - 1, 1.0)
    } else {
        (i - 1, i + 1, 2.0)
    }
}

/// Central differences in the interior, one-sided differences on the border.
pub fn depth_gradient(d: &DepthMap) -> Result<GradientMap> {
    let (h, w) = d.shape();
    if h < 2 || w < 2 {
        return Err(ImageryError::DegenerateSize { height: h, width: w });
    }
    let depth = d.depth();
    let mut gx = Field::zeros(h, w);
    let mut gy = Field::zeros(h, w);
    let mut magnitude = Field::zeros(h, w);
    let mut valid = vec![false; h * w];

    for y in 0..h {
        let (y0, y1, dy) = stencil(y, h);
        for x in 0..w {
            let (x0, x1, dx) = stencil(x, w);
            let ok = d.is_valid(y, x)
                && d.is_valid(y, x0)
                && d.is_valid(y, x1)
                && d.is_valid(y0, x)
                && d.is_valid(y1, x);
            if !ok {
                continue;
            }
            let gxv = (depth[(y, x1)] - depth[(y, x0)]) / dx;
            let gyv = (depth[(y1, x)] - depth[(y0, x)]) / dy;
            gx[(y, x)] = gxv;
            gy[(y, x)] = gyv;
            magnitude[(y, x)] = gxv.hypot(gyv);
            valid[y * w + x] = true;
        }
    }
    Ok(GradientMap { gx, gy, magnitude, valid })
}
