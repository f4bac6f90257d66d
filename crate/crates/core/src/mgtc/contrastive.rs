use super::{ContrastiveBatch, Label, MgtcError, Result};

#[derive(Clone, Debug)]
pub struct ContrastiveLoss {
    pub loss: f64,
    /// Gradient with respect to the (unit-norm) batch features, `N × C` row-major.
    pub grad: Vec<f64>,
}

/// Supervised contrastive loss over unit-norm features.
///
/// ```text
/// L = -1/N Σ_i 1/|P(i)| Σ_{j∈P(i)} log( exp(f_i·f_j/τ) / Σ_{k≠i} exp(f_i·f_k/τ) )
/// ```
///
/// `P(i)` holds every other sample with the same label. The denominator is
/// evaluated with a max-shifted log-sum-exp.
pub fn contrastive_loss(batch: &ContrastiveBatch) -> Result<ContrastiveLoss> {
    let n = batch.len();
    let c = batch.dim;
    let tau = batch.tau;
    if !(tau > 0.0) {
        return Err(MgtcError::BadTau(tau));
    }
    if n < 2 {
        return Err(MgtcError::TooFewSamples(n));
    }
    let f = &batch.features;
    let labels = &batch.labels;

    let positives: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && labels[j] == labels[i]).count())
        .collect();
    if let Some(i) = positives.iter().position(|&p| p == 0) {
        return Err(MgtcError::NoPositives(i));
    }

    // Scaled similarities s_ik = f_i·f_k / τ.
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for k in i..n {
            let d: f64 = f[i * c..(i + 1) * c].iter().zip(&f[k * c..(k + 1) * c]).map(|(a, b)| a * b).sum();
            sim[i * n + k] = d / tau;
            sim[k * n + i] = d / tau;
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    // coef[i*n + k] = dL/ds_ik.
    let mut coef = vec![0.0; n * n];
    for i in 0..n {
        let row = &sim[i * n..(i + 1) * n];
        let peak = row.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &s)| s).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &s)| (s - peak).exp()).sum();
        let lse = peak + denom.ln();
        let inv_p = 1.0 / positives[i] as f64;
        for k in 0..n {
            if k == i {
                continue;
            }
            let softmax = (row[k] - lse).exp();
            let positive = labels[k] == labels[i];
            if positive {
                loss -= inv_n * inv_p * (row[k] - lse);
            }
            coef[i * n + k] = inv_n * (softmax - if positive { inv_p } else { 0.0 });
        }
    }

    let mut grad = vec![0.0; n * c];
    for i in 0..n {
        for k in 0..n {
            let a = coef[i * n + k] / tau;
            if a == 0.0 {
                continue;
            }
            for d in 0..c {
                grad[i * c + d] += a * f[k * c + d];
                grad[k * c + d] += a * f[i * c + d];
            }
        }
    }
    debug_assert!(labels.iter().all(|&l| l != Label::Ignore));
    Ok(ContrastiveLoss { loss, grad })
}
