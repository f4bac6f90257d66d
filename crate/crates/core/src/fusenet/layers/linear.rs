//! `Y = X Wᵀ + b` on an `n × in` token matrix with `W: out × in`.

use crate::tensor::Tensor;

pub fn forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = weight.shape()[0];
    debug_assert_eq!(weight.shape()[1], d_in);
    let (xd, wd, bd) = (x.data(), weight.data(), bias.data());
    let mut out = vec![0.0; n * d_out];
    for i in 0..n {
        let row = &xd[i * d_in..(i + 1) * d_in];
        for o in 0..d_out {
            let wrow = &wd[o * d_in..(o + 1) * d_in];
            out[i * d_out + o] = bd[o] + row.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::new(vec![n, d_out], out).expect("linear output")
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let d_out = weight.shape()[0];
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; n * d_in];
    let mut gw = vec![0.0; d_out * d_in];
    let mut gb = vec![0.0; d_out];
    for i in 0..n {
        for o in 0..d_out {
            let g = gd[i * d_out + o];
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            for k in 0..d_in {
                gx[i * d_in + k] += g * wd[o * d_in + k];
                gw[o * d_in + k] += g * xd[i * d_in + k];
            }
        }
    }
    (
        Tensor::new(vec![n, d_in], gx).expect("grad x"),
        Tensor::new(vec![d_out, d_in], gw).expect("grad w"),
        Tensor::new(vec![d_out], gb).expect("grad b"),
    )
}
