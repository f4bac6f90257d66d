//! Dense `f64` tensors used for feature maps, parameters and gradients.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// A `C × h × w` activation tensor.
pub type FeatureMap = Tensor;

#[derive(Debug, thiserror::Error)]
#[error("tensor shape mismatch: expected {expected:?}, got {got:?}")]
pub struct ShapeError {
    pub expected: Vec<usize>,
    pub got: Vec<usize>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ShapeError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ShapeError { expected: shape, got: vec![data.len()] });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, h, w)` of a rank-3 tensor.
    ///
    /// # Panics
    /// If the tensor is not rank 3.
    pub fn dims3(&self) -> (usize, usize, usize) {
        match self.shape[..] {
            [c, h, w] => (c, h, w),
            _ => panic!("expected rank-3 tensor, got shape {:?}", self.shape),
        }
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(ShapeError { expected: shape.to_vec(), got: self.shape });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn check_shape(&self, expected: &[usize]) -> Result<(), ShapeError> {
        if self.shape != expected {
            return Err(ShapeError { expected: expected.to_vec(), got: self.shape.clone() });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<(), ShapeError> {
        other.check_shape(&self.shape)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor, k: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel vector at spatial location `l` of a rank-3 tensor.
    pub fn channel_vector(&self, l: usize) -> Vec<f64> {
        let (c, h, w) = self.dims3();
        (0..c).map(|k| self.data[k * h * w + l]).collect()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}
