//! Minimal differentiable layer substrate.
//!
//! Every layer is a pair of free functions: `forward` computes the output
//! from inputs and parameters, `backward` takes the upstream gradient (plus
//! whatever the forward pass needs to be re-read) and returns gradients for
//! the inputs and parameters. Feature maps are `C × H × W`; token matrices
//! are `n × d`, row-major.

pub mod attention;
pub mod conv2d;
pub mod layernorm;
pub mod linear;
pub mod relu;
pub mod softplus;
pub mod upsample;

use crate::tensor::Tensor;

/// `C × H × W` feature map → `(H·W) × C` token matrix.
pub fn to_tokens(x: &Tensor) -> Tensor {
    let (c, h, w) = x.dims3();
    let n = h * w;
    let src = x.data();
    let mut out = vec![0.0; n * c];
    for k in 0..c {
        for l in 0..n {
            out[l * c + k] = src[k * n + l];
        }
    }
    Tensor::new(vec![n, c], out).expect("token shape")
}

/// Inverse of [`to_tokens`].
pub fn from_tokens(t: &Tensor, h: usize, w: usize) -> Tensor {
    let (n, c) = (t.shape()[0], t.shape()[1]);
    debug_assert_eq!(n, h * w);
    let src = t.data();
    let mut out = vec![0.0; n * c];
    for l in 0..n {
        for k in 0..c {
            out[k * n + l] = src[l * c + k];
        }
    }
    Tensor::new(vec![c, h, w], out).expect("map shape")
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_round_trip() {
        let x = Tensor::from_fn(&[3, 2, 4], |i| i as f64);
        let t = to_tokens(&x);
        assert_eq!(t.shape(), &[8, 3]);
        assert_eq!(t.data()[..3], [0.0, 8.0, 16.0]);
        assert_eq!(from_tokens(&t, 2, 4), x);
    }
}
