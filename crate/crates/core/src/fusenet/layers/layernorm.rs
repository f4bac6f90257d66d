//! Layer normalization over the feature axis of an `n × d` token matrix.

use crate::tensor::Tensor;

pub const EPS: f64 = 1e-5;

/// Forward state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

pub fn forward(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> (Tensor, NormCache) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x.data()[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + EPS).sqrt();
        inv_std.push(is);
        for k in 0..d {
            let h = (row[k] - mean) * is;
            xhat[i * d + k] = h;
            out[i * d + k] = gamma.data()[k] * h + beta.data()[k];
        }
    }
    (
        Tensor::new(vec![n, d], out).expect("norm output"),
        NormCache { normalized: Tensor::new(vec![n, d], xhat).expect("norm cache"), inv_std },
    )
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn backward(cache: &NormCache, gamma: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d) = (grad_out.shape()[0], grad_out.shape()[1]);
    let (xh, g) = (cache.normalized.data(), grad_out.data());
    let mut gx = vec![0.0; n * d];
    let mut gg = vec![0.0; d];
    let mut gbeta = vec![0.0; d];
    for i in 0..n {
        let mut sum_dh = 0.0;
        let mut sum_dh_h = 0.0;
        for k in 0..d {
            let idx = i * d + k;
            gg[k] += g[idx] * xh[idx];
            gbeta[k] += g[idx];
            let dh = g[idx] * gamma.data()[k];
            sum_dh += dh;
            sum_dh_h += dh * xh[idx];
        }
        let is = cache.inv_std[i];
        for k in 0..d {
            let idx = i * d + k;
            let dh = g[idx] * gamma.data()[k];
            gx[idx] = is * (dh - sum_dh / d as f64 - xh[idx] * sum_dh_h / d as f64);
        }
    }
    (
        Tensor::new(vec![n, d], gx).expect("grad x"),
        Tensor::new(vec![d], gg).expect("grad gamma"),
        Tensor::new(vec![d], gbeta).expect("grad beta"),
    )
}
