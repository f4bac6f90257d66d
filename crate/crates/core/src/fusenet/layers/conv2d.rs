//! 2-D convolution with square kernels, zero padding `k / 2` and a stride.
//!
//! Weight layout is `out × in × k × k`; output size is
//! `(H + 2·pad − k) / stride + 1` per axis.

use crate::tensor::Tensor;

pub fn output_size(n: usize, k: usize, stride: usize) -> usize {
    (n + 2 * (k / 2) - k) / stride + 1
}

/// Output indices `o` for which `o·stride + kk − pad` lands inside `[0, n)`.
#[inline]
fn valid_range(n: usize, n_out: usize, kk: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if kk >= pad { 0 } else { (pad - kk).div_ceil(stride) };
    // o·s + kk − pad ≤ n − 1
    let hi = if n + pad < kk + 1 { 0 } else { ((n + pad - kk - 1) / stride + 1).min(n_out) };
    (lo, hi.max(lo))
}

pub fn forward(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Tensor {
    let (c_in, h, w) = x.dims3();
    let (c_out, k) = (weight.shape()[0], weight.shape()[2]);
    debug_assert_eq!(weight.shape()[1], c_in);
    let pad = k / 2;
    let (ho, wo) = (output_size(h, k, stride), output_size(w, k, stride));
    let mut out = vec![0.0; c_out * ho * wo];
    let (xd, wd) = (x.data(), weight.data());
    for oc in 0..c_out {
        let plane = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
        plane.fill(bias.data()[oc]);
        for ic in 0..c_in {
            let src = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                let (y0, y1) = valid_range(h, ho, ky, pad, stride);
                for kx in 0..k {
                    let wv = wd[((oc * c_in + ic) * k + ky) * k + kx];
                    let (x0, x1) = valid_range(w, wo, kx, pad, stride);
                    for oy in y0..y1 {
                        let iy = oy * stride + ky - pad;
                        let srow = &src[iy * w..(iy + 1) * w];
                        let orow = &mut plane[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            let off = x0 + kx - pad;
                            for (o, s) in orow[x0..x1].iter_mut().zip(&srow[off..off + (x1 - x0)]) {
                                *o += wv * s;
                            }
                        } else {
                            for ox in x0..x1 {
                                orow[ox] += wv * srow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, ho, wo], out).expect("conv output")
}

/// Gradients of a convolution.
pub struct ConvGrads {
    /// `None` when the caller did not ask for it.
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn backward(x: &Tensor, weight: &Tensor, stride: usize, grad_out: &Tensor, need_input: bool) -> ConvGrads {
    let (c_in, h, w) = x.dims3();
    let (c_out, k) = (weight.shape()[0], weight.shape()[2]);
    let pad = k / 2;
    let (_, ho, wo) = grad_out.dims3();
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = if need_input { vec![0.0; c_in * h * w] } else { Vec::new() };
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; c_out];
    for oc in 0..c_out {
        let gplane = &gd[oc * ho * wo..(oc + 1) * ho * wo];
        gb[oc] = gplane.iter().sum();
        for ic in 0..c_in {
            let src = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..k {
                let (y0, y1) = valid_range(h, ho, ky, pad, stride);
                for kx in 0..k {
                    let widx = ((oc * c_in + ic) * k + ky) * k + kx;
                    let wv = wd[widx];
                    let (x0, x1) = valid_range(w, wo, kx, pad, stride);
                    let mut acc = 0.0;
                    for oy in y0..y1 {
                        let iy = oy * stride + ky - pad;
                        let grow = &gplane[oy * wo..(oy + 1) * wo];
                        if stride == 1 {
                            let off = x0 + kx - pad;
                            let srow = &src[iy * w + off..iy * w + off + (x1 - x0)];
                            acc += grow[x0..x1].iter().zip(srow).map(|(g, s)| g * s).sum::<f64>();
                            if need_input {
                                let dst = &mut gx[ic * h * w + iy * w + off..ic * h * w + iy * w + off + (x1 - x0)];
                                for (d, g) in dst.iter_mut().zip(&grow[x0..x1]) {
                                    *d += wv * g;
                                }
                            }
                        } else {
                            for ox in x0..x1 {
                                let ix = ox * stride + kx - pad;
                                acc += grow[ox] * src[iy * w + ix];
                                if need_input {
                                    gx[ic * h * w + iy * w + ix] += wv * grow[ox];
                                }
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    ConvGrads {
        input: need_input.then(|| Tensor::new(vec![c_in, h, w], gx).expect("grad x")),
        weight: Tensor::new(weight.shape().to_vec(), gw).expect("grad w"),
        bias: Tensor::new(vec![c_out], gb).expect("grad b"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusenet::layers::testing::{check, random};
    use rand::{Rng, SeedableRng};

    /// Direct definition with explicit bounds checks.
    fn oracle(x: &Tensor, w: &Tensor, b: &Tensor, s: usize) -> Tensor {
        let (ci, h, wd) = x.dims3();
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let p = k as i64 / 2;
        let (ho, wo) = (output_size(h, k, s), output_size(wd, k, s));
        Tensor::from_fn(&[co, ho, wo], |i| {
            let (oc, oy, ox) = (i / (ho * wo), (i / wo) % ho, i % wo);
            let mut acc = b.data()[oc];
            for ic in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * s + ky) as i64 - p;
                        let ix = (ox * s + kx) as i64 - p;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += w.data()[((oc * ci + ic) * k + ky) * k + kx]
                                * x.data()[(ic * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_direct_definition_and_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for trial in 0..24 {
            let ci = rng.random_range(1..4);
            let co = rng.random_range(1..4);
            let h = rng.random_range(1..8);
            let wd = rng.random_range(1..8);
            let k = if trial % 3 == 0 { 1 } else { 3 };
            let s = rng.random_range(1..3);
            let x = random(&mut rng, &[ci, h, wd]);
            let w = random(&mut rng, &[co, ci, k, k]);
            let b = random(&mut rng, &[co]);
            let y = forward(&x, &w, &b, s);
            let o = oracle(&x, &w, &b, s);
            assert_eq!(y.shape(), o.shape());
            for (a, e) in y.data().iter().zip(o.data()) {
                assert!((a - e).abs() < 1e-12);
            }
            let probe = random(&mut rng, y.shape());
            let g = backward(&x, &w, s, &probe, true);
            check("x", &x, g.input.as_ref().unwrap(), |x| forward(x, &w, &b, s), &probe);
            check("w", &w, &g.weight, |w| forward(&x, w, &b, s), &probe);
            check("b", &b, &g.bias, |b| forward(&x, &w, b, s), &probe);
        }
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        assert_eq!(output_size(64, 3, 2), 32);
        assert_eq!(output_size(8, 3, 2), 4);
        assert_eq!(output_size(7, 3, 1), 7);
    }
}
