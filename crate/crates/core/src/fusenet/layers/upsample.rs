//! Bilinear ×2 upsampling with half-pixel centres and edge clamping.

use crate::tensor::Tensor;

/// Per output index: the two source indices and the weight of the second.
fn taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let s = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub fn forward(x: &Tensor) -> Tensor {
    let (c, h, w) = x.dims3();
    let (ty, tx) = (taps(h), taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let src = &x.data()[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                out[ch * ho * wo + oy * wo + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out).expect("upsample output")
}

/// Adjoint of [`forward`]; `shape` is the input shape.
pub fn backward(shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (ty, tx) = (taps(h), taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        let dst = &mut gx[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let g = grad_out.data()[ch * ho * wo + oy * wo + ox];
                dst[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += g * (1.0 - fy) * fx;
                dst[y1 * w + x0] += g * fy * (1.0 - fx);
                dst[y1 * w + x1] += g * fy * fx;
            }
        }
    }
    Tensor::new(shape.to_vec(), gx).expect("grad x")
}
