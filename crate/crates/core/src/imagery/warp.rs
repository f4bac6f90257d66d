use super::{Field, FlowField, ImageryError, Result};

/// Output of a backward warp: the resampled field and which pixels sampled
/// inside the source frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub field: Field,
    pub covered: Vec<bool>,
}

const EDGE_TOLERANCE: f64 = 1e-9;

/// Samples `src` at `(x - scale*u, y - scale*v)` with bilinear interpolation.
///
/// `scale` picks a time inside the exposure: -1 is the start, +1 the end and
/// 0 the reference frame. Samples that fall outside the frame are left at 0
/// and marked uncovered.
pub fn warp_bilinear(src: &Field, flow: &FlowField, scale: f64) -> Result<Warped> {
    src.check_same_shape(&flow.u)?;
    if !scale.is_finite() {
        return Err(ImageryError::NonFinite(0));
    }
    let (h, w) = src.shape();
    let mut field = Field::zeros(h, w);
    let mut covered = vec![false; h * w];
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;

    for y in 0..h {
        for x in 0..w {
            let sx = x as f64 - scale * flow.u[(y, x)];
            let sy = y as f64 - scale * flow.v[(y, x)];
            if sx < -EDGE_TOLERANCE
                || sy < -EDGE_TOLERANCE
                || sx > max_x + EDGE_TOLERANCE
                || sy > max_y + EDGE_TOLERANCE
            {
                continue;
            }
            let sx = sx.clamp(0.0, max_x);
            let sy = sy.clamp(0.0, max_y);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let top = src[(y0, x0)] * (1.0 - fx) + src[(y0, x1)] * fx;
            let bottom = src[(y1, x0)] * (1.0 - fx) + src[(y1, x1)] * fx;
            field[(y, x)] = top * (1.0 - fy) + bottom * fy;
            covered[y * w + x] = true;
        }
    }
    Ok(Warped { field, covered })
}
