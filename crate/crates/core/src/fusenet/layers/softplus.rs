use crate::tensor::Tensor;

pub fn forward(x: &Tensor) -> Tensor {
    x.map(crate::easf::softplus)
}

pub fn backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * if v >= 0.0 { 1.0 / (1.0 + (-v).exp()) } else { v.exp() / (1.0 + v.exp()) })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}
