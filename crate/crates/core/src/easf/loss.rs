use super::{EasfError, Result, WeightMap};
use crate::imagery::Field;
use crate::tensor::{FeatureMap, Tensor};

const MIN_NORM: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SpatialLoss {
    pub loss: f64,
    /// Gradient with respect to the fused features; the modality features are
    /// treated as fixed targets.
    pub grad_fused: FeatureMap,
}

/// Nearest-neighbour resampling of a patch-grid map onto an `h × w` grid.
pub fn resize_nearest(src: &Field, h: usize, w: usize) -> Field {
    let (sh, sw) = src.shape();
    if (sh, sw) == (h, w) {
        return src.clone();
    }
    Field::from_fn(h, w, |y, x| src[(y * sh / h, x * sw / w)])
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weighted two-way softmax cross-entropy between per-location cosine
/// similarities `S_e = cos(F_fused, F_e)` and `S_f = cos(F_fused, F_f)`,
/// averaged over all spatial locations.
///
/// Per location the loss is `-W ln softmax(S)_e - (1-W) ln softmax(S)_f`.
pub fn spatial_loss(fused: &FeatureMap, event: &FeatureMap, frame: &FeatureMap, weights: &WeightMap) -> Result<SpatialLoss> {
    for other in [event, frame] {
        if other.shape() != fused.shape() {
            return Err(EasfError::ShapeMismatch(fused.shape().to_vec(), other.shape().to_vec()));
        }
    }
    let (c, h, w) = fused.dims3();
    let plane = h * w;
    let wmap = resize_nearest(&weights.data, h, w);
    let (a, e, f) = (fused.data(), event.data(), frame.data());
    let mut grad = Tensor::zeros(fused.shape());
    let g = grad.data_mut();
    let mut total = 0.0;
    let inv_n = 1.0 / plane as f64;

    for l in 0..plane {
        let mut aa = 0.0;
        let mut ee = 0.0;
        let mut ff = 0.0;
        let mut ae = 0.0;
        let mut af = 0.0;
        for k in 0..c {
            let i = k * plane + l;
            aa += a[i] * a[i];
            ee += e[i] * e[i];
            ff += f[i] * f[i];
            ae += a[i] * e[i];
            af += a[i] * f[i];
        }
        let (na, ne, nf) = (aa.sqrt(), ee.sqrt(), ff.sqrt());
        if na < MIN_NORM || ne < MIN_NORM || nf < MIN_NORM {
            return Err(EasfError::ZeroNorm { location: l });
        }
        let s_e = ae / (na * ne);
        let s_f = af / (na * nf);
        let wt = wmap.data()[l];
        total += wt * softplus(s_f - s_e) + (1.0 - wt) * softplus(s_e - s_f);

        // dL/dS_e = p_e - W, dL/dS_f = W - p_e.
        let d_se = (sigmoid(s_e - s_f) - wt) * inv_n;
        let d_sf = -d_se;
        for k in 0..c {
            let i = k * plane + l;
            let ds_e = e[i] / (na * ne) - s_e * a[i] / aa;
            let ds_f = f[i] / (na * nf) - s_f * a[i] / aa;
            g[i] = d_se * ds_e + d_sf * ds_f;
        }
    }
    Ok(SpatialLoss { loss: total * inv_n, grad_fused: grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn uniform_w(h: usize, w: usize, v: f64) -> WeightMap {
        WeightMap { data: Field::filled(h, w, v), threshold: 0.3 }
    }

    fn random_map(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn symmetric_case_is_ln2() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = random_map(&mut rng, &[4, 3, 3]);
        let fused = random_map(&mut rng, &[4, 3, 3]);
        let out = spatial_loss(&fused, &f, &f, &uniform_w(3, 3, 0.5)).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn aligned_with_event_orthogonal_to_frame() {
        let e = Tensor::new(vec![2, 1, 1], vec![1.0, 0.0]).unwrap();
        let f = Tensor::new(vec![2, 1, 1], vec![0.0, 3.0]).unwrap();
        let out = spatial_loss(&e, &e, &f, &uniform_w(1, 1, 1.0)).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.loss - expect).abs() < 1e-12);
        assert!((out.loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn zero_norm_is_rejected() {
        let z = Tensor::zeros(&[2, 1, 1]);
        let e = Tensor::new(vec![2, 1, 1], vec![1.0, 0.0]).unwrap();
        assert!(matches!(spatial_loss(&z, &e, &e, &uniform_w(1, 1, 0.5)), Err(EasfError::ZeroNorm { location: 0 })));
    }

    #[test]
    fn nearest_resize_replicates_patches() {
        let src = Field::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = resize_nearest(&src, 4, 4);
        assert_eq!(up[(0, 1)], 1.0);
        assert_eq!(up[(1, 3)], 2.0);
        assert_eq!(up[(3, 0)], 3.0);
        let down = resize_nearest(&up, 2, 2);
        assert_eq!(down, src);
    }

    #[test]
    fn invariant_to_positive_rescaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (a, e, f) = (random_map(&mut rng, &[3, 2, 2]), random_map(&mut rng, &[3, 2, 2]), random_map(&mut rng, &[3, 2, 2]));
        let wm = WeightMap { data: Field::from_fn(2, 2, |y, x| 0.2 + 0.2 * (y + x) as f64), threshold: 0.3 };
        let base = spatial_loss(&a, &e, &f, &wm).unwrap().loss;
        for k in [0.01, 3.0, 250.0] {
            assert!((spatial_loss(&a.map(|v| v * k), &e, &f, &wm).unwrap().loss - base).abs() < 1e-12);
            assert!((spatial_loss(&a, &e.map(|v| v * k), &f, &wm).unwrap().loss - base).abs() < 1e-12);
            assert!((spatial_loss(&a, &e, &f.map(|v| v * k), &wm).unwrap().loss - base).abs() < 1e-12);
        }
        assert!(base >= 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let (a, e, f) = (random_map(&mut rng, &[4, 3, 3]), random_map(&mut rng, &[4, 3, 3]), random_map(&mut rng, &[4, 3, 3]));
            let wm = WeightMap { data: Field::from_fn(3, 3, |_, _| rng.random_range(0.0..1.0)), threshold: 0.3 };
            let analytic = spatial_loss(&a, &e, &f, &wm).unwrap().grad_fused;
            let step = 1e-4;
            for i in 0..a.len() {
                let mut p = a.clone();
                p.data_mut()[i] += step;
                let mut m = a.clone();
                m.data_mut()[i] -= step;
                let fd = (spatial_loss(&p, &e, &f, &wm).unwrap().loss - spatial_loss(&m, &e, &f, &wm).unwrap().loss) / (2.0 * step);
                let g = analytic.data()[i];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                assert!(rel <= 1e-4, "index {i}: analytic {g} vs fd {fd}");
            }
        }
    }

    #[test]
    fn descent_moves_fused_towards_favoured_modality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let e = random_map(&mut rng, &[4, 2, 2]);
        let f = random_map(&mut rng, &[4, 2, 2]);
        let mut a = random_map(&mut rng, &[4, 2, 2]);
        let wm = uniform_w(2, 2, 1.0);
        let cos_e = |a: &Tensor| -> f64 {
            (0..4).map(|l| {
                let (x, y) = (a.channel_vector(l), e.channel_vector(l));
                let d: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
                d / (x.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt())
            }).sum()
        };
        let before = cos_e(&a);
        let mut prev = spatial_loss(&a, &e, &f, &wm).unwrap().loss;
        for _ in 0..200 {
            let out = spatial_loss(&a, &e, &f, &wm).unwrap();
            a.add_scaled(&out.grad_fused, -0.5);
            assert!(out.loss <= prev + 1e-12);
            prev = out.loss;
        }
        assert!(cos_e(&a) > before);
    }
}
