use crate::tensor::Tensor;

pub fn forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at `x = 0`.
pub fn backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = x.data().iter().zip(grad_out.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}
