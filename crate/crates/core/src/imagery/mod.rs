//! Image, depth and flow containers shared by every other stage, plus the
//! spatial operators they need (central-difference gradients and backward
//! bilinear warping) and the on-disk formats (`TNS1`, PGM, PFM).

mod container;
mod gradient;
mod netpbm;
mod warp;

pub use container::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, FloatTensor};
pub use gradient::{depth_gradient, GradientMap};
pub use netpbm::{read_pfm, read_pgm, write_pfm, write_pgm, write_pgm_mask};
pub use warp::{warp_bilinear, Warped};

use std::ops::{Index, IndexMut};

#[derive(Debug, thiserror::Error)]
pub enum ImageryError {
    #[error("field must be at least 2x2, got {height}x{width}")]
    DegenerateSize { height: usize, width: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported tensor rank {0} (only 2 and 3 are supported)")]
    RankUnsupported(usize),
    #[error("truncated file: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error("value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ImageryError> = std::result::Result<T, E>;

/// Dense row-major H×W scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(ImageryError::ShapeMismatch {
                expected: vec![height, width],
                got: vec![data.len()],
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub(crate) fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(ImageryError::ShapeMismatch {
                expected: vec![self.height, self.width],
                got: vec![other.height, other.width],
            });
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> FloatTensor {
        FloatTensor::from_f64(vec![self.height, self.width], &self.data)
            .expect("rank-2 field is always a valid tensor")
    }

    pub fn from_tensor(t: &FloatTensor) -> Result<Self> {
        match *t.dims() {
            [h, w] => Field::new(h, w, t.to_f64()),
            ref d => Err(ImageryError::ShapeMismatch { expected: vec![0, 0], got: d.to_vec() }),
        }
    }
}

impl Index<(usize, usize)> for Field {
    type Output = f64;
    fn index(&self, (y, x): (usize, usize)) -> &f64 {
        &self.data[y * self.width + x]
    }
}

impl IndexMut<(usize, usize)> for Field {
    fn index_mut(&mut self, (y, x): (usize, usize)) -> &mut f64 {
        &mut self.data[y * self.width + x]
    }
}

/// Intensity image with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Field);

impl Image {
    pub fn new(field: Field) -> Result<Self> {
        for (i, &v) in field.data().iter().enumerate() {
            if !v.is_finite() {
                return Err(ImageryError::NonFinite(i));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(ImageryError::OutOfRange { index: i, value: v });
            }
        }
        Ok(Self(field))
    }

    /// Clamps into `[0, 1]`; non-finite values become 0.
    pub fn from_field_clamped(field: Field) -> Self {
        Self(field.map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }))
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

/// Depth map with a validity mask. Valid pixels are strictly positive and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    depth: Field,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map whose mask marks every positive finite pixel valid.
    pub fn new(depth: Field) -> Self {
        let valid = depth.data().iter().map(|&d| d.is_finite() && d > 0.0).collect();
        Self { depth, valid }
    }

    /// Builds a depth map from an explicit mask; pixels that are not positive
    /// and finite are dropped from the mask.
    pub fn with_mask(depth: Field, mask: &[bool]) -> Result<Self> {
        if mask.len() != depth.len() {
            return Err(ImageryError::ShapeMismatch {
                expected: vec![depth.height(), depth.width()],
                got: vec![mask.len()],
            });
        }
        let valid = depth
            .data()
            .iter()
            .zip(mask)
            .map(|(&d, &m)| m && d.is_finite() && d > 0.0)
            .collect();
        Ok(Self { depth, valid })
    }

    pub fn depth(&self) -> &Field {
        &self.depth
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.depth.shape()
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.depth.width() + x]
    }

    /// Min and max over valid pixels, or `None` when nothing is valid.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.depth
            .data()
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&d, _)| d)
            .fold(None, |acc, d| match acc {
                None => Some((d, d)),
                Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
            })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { depth: self.depth.map(|d| d * factor), valid: self.valid.clone() }
    }
}

/// Per-pixel displacement `(u, v)` per unit of normalized exposure time.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Field,
    pub v: Field,
}

impl FlowField {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        u.check_same_shape(&v)?;
        if let Some(i) = u.data().iter().chain(v.data()).position(|x| !x.is_finite()) {
            return Err(ImageryError::NonFinite(i));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { u: Field::zeros(height, width), v: Field::zeros(height, width) }
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self { u: Field::filled(height, width, u), v: Field::filled(height, width, v) }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.u.shape()
    }

    /// Rank-3 `[2, H, W]` tensor with `u` then `v`.
    pub fn to_tensor(&self) -> FloatTensor {
        let mut data = self.u.data().to_vec();
        data.extend_from_slice(self.v.data());
        let (h, w) = self.shape();
        FloatTensor::from_f64(vec![2, h, w], &data).expect("rank-3 flow tensor")
    }

    pub fn from_tensor(t: &FloatTensor) -> Result<Self> {
        match *t.dims() {
            [2, h, w] => {
                let data = t.to_f64();
                let (u, v) = data.split_at(h * w);
                Self::new(Field::new(h, w, u.to_vec())?, Field::new(h, w, v.to_vec())?)
            }
            ref d => Err(ImageryError::ShapeMismatch { expected: vec![2, 0, 0], got: d.to_vec() }),
        }
    }
}

/// 3×3 binary dilation (Chebyshev radius 1).
pub fn dilate(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    out[ny * width + nx] = true;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range() {
        let f = Field::new(1, 2, vec![0.5, 1.2]).unwrap();
        assert!(matches!(Image::new(f), Err(ImageryError::OutOfRange { index: 1, .. })));
    }

    #[test]
    fn depth_mask_excludes_nonpositive() {
        let d = DepthMap::new(Field::new(1, 3, vec![1.0, 0.0, f64::NAN]).unwrap());
        assert_eq!(d.valid(), &[true, false, false]);
        assert_eq!(d.valid_range(), Some((1.0, 1.0)));
    }

    #[test]
    fn dilation_grows_single_pixel_to_3x3() {
        let mut m = vec![false; 25];
        m[12] = true;
        let d = dilate(&m, 5, 5);
        assert_eq!(d.iter().filter(|&&b| b).count(), 9);
        assert!(d[6] && d[18] && !d[0]);
    }

    #[test]
    fn flow_tensor_round_trip() {
        let f = FlowField::new(
            Field::from_fn(2, 3, |y, x| (y * 3 + x) as f64),
            Field::filled(2, 3, -0.5),
        )
        .unwrap();
        assert_eq!(FlowField::from_tensor(&f.to_tensor()).unwrap(), f);
    }
}
