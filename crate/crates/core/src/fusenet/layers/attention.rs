//! Single-head scaled dot-product attention, `O = softmax(Q Kᵀ / √d) V`.

use crate::tensor::Tensor;

fn matmul_nt(a: &[f64], b: &[f64], n: usize, m: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ar = &a[i * d..(i + 1) * d];
        for j in 0..m {
            out[i * m + j] = ar.iter().zip(&b[j * d..(j + 1) * d]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Returns the output and the attention matrix (`n_q × n_k`).
pub fn forward(q: &Tensor, k: &Tensor, v: &Tensor) -> (Tensor, Tensor) {
    let (nq, d) = (q.shape()[0], q.shape()[1]);
    let nk = k.shape()[0];
    let dv = v.shape()[1];
    let scale = 1.0 / (d as f64).sqrt();
    let mut a = matmul_nt(q.data(), k.data(), nq, nk, d);
    for row in a.chunks_mut(nk) {
        let m = row.iter().fold(f64::NEG_INFINITY, |acc, &s| acc.max(s * scale));
        let mut z = 0.0;
        for s in row.iter_mut() {
            *s = (*s * scale - m).exp();
            z += *s;
        }
        row.iter_mut().for_each(|s| *s /= z);
    }
    let mut out = vec![0.0; nq * dv];
    for i in 0..nq {
        for j in 0..nk {
            let aij = a[i * nk + j];
            for c in 0..dv {
                out[i * dv + c] += aij * v.data()[j * dv + c];
            }
        }
    }
    (
        Tensor::new(vec![nq, dv], out).expect("attention output"),
        Tensor::new(vec![nq, nk], a).expect("attention weights"),
    )
}

/// Returns `(grad_q, grad_k, grad_v)`.
pub fn backward(q: &Tensor, k: &Tensor, v: &Tensor, attn: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (nq, d) = (q.shape()[0], q.shape()[1]);
    let nk = k.shape()[0];
    let dv = v.shape()[1];
    let scale = 1.0 / (d as f64).sqrt();
    let (a, g) = (attn.data(), grad_out.data());
    let mut gv = vec![0.0; nk * dv];
    for i in 0..nq {
        for j in 0..nk {
            let aij = a[i * nk + j];
            for c in 0..dv {
                gv[j * dv + c] += aij * g[i * dv + c];
            }
        }
    }
    // dA = dO Vᵀ, then the softmax Jacobian row by row.
    let mut ds = matmul_nt(g, v.data(), nq, nk, dv);
    for i in 0..nq {
        let row = &mut ds[i * nk..(i + 1) * nk];
        let arow = &a[i * nk..(i + 1) * nk];
        let dot: f64 = row.iter().zip(arow).map(|(x, y)| x * y).sum();
        for (s, &aij) in row.iter_mut().zip(arow) {
            *s = aij * (*s - dot) * scale;
        }
    }
    let mut gq = vec![0.0; nq * d];
    let mut gk = vec![0.0; nk * d];
    for i in 0..nq {
        for j in 0..nk {
            let s = ds[i * nk + j];
            if s == 0.0 {
                continue;
            }
            for c in 0..d {
                gq[i * d + c] += s * k.data()[j * d + c];
                gk[j * d + c] += s * q.data()[i * d + c];
            }
        }
    }
    (
        Tensor::new(vec![nq, d], gq).expect("grad q"),
        Tensor::new(vec![nk, d], gk).expect("grad k"),
        Tensor::new(vec![nk, dv], gv).expect("grad v"),
    )
}
