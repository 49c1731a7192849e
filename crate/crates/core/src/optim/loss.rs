use crate::error::Result;
use crate::metrics::ssim_with_grad;
use crate::types::SarImage;

/// `(1 − λ)·mean|S − T| + λ·(1 − SSIM(S, T))` and its gradient with respect to `S`.
///
/// SSIM uses `MAX = 1`, the intensity range of normalized targets. The L1
/// subgradient at `S = T` is taken as zero.
pub fn loss(rendered: &SarImage, target: &SarImage, lambda_ssim: f64) -> Result<(f64, SarImage)> {
    rendered.check_same_shape(target)?;
    let n = rendered.data.len().max(1) as f64;
    let w1 = (1.0 - lambda_ssim) / n;
    let mut l1 = 0.0;
    let mut grad = SarImage::zeros(rendered.height, rendered.width);
    for ((g, s), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = s - t;
        l1 += d.abs();
        *g = w1 * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
    }
    let mut value = (1.0 - lambda_ssim) * l1 / n;
    if lambda_ssim > 0.0 {
        let (s, ds) = ssim_with_grad(rendered, target, 1.0)?;
        value += lambda_ssim * (1.0 - s);
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= lambda_ssim * d;
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SarImage {
        SarImage::from_vec(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(&mut rng, 12, 14);
        assert_eq!(loss(&x, &x, 0.2).unwrap().0, 0.0);
        let shifted = SarImage::from_vec(12, 14, x.data.iter().map(|v| v + 0.25).collect()).unwrap();
        assert!((loss(&x, &shifted, 0.0).unwrap().0 - 0.25).abs() < 1e-12);
        assert!(loss(&x, &SarImage::zeros(3, 3), 0.2).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (h, w) in [(13, 12), (5, 6)] {
            let s = random(&mut rng, h, w);
            let t = random(&mut rng, h, w);
            let (_, g) = loss(&s, &t, 0.2).unwrap();
            let eps = 1e-7;
            for q in 0..s.data.len() {
                let mut up = s.clone();
                up.data[q] += eps;
                let mut down = s.clone();
                down.data[q] -= eps;
                let fd = (loss(&up, &t, 0.2).unwrap().0 - loss(&down, &t, 0.2).unwrap().0) / (2.0 * eps);
                assert!((fd - g.data[q]).abs() <= 1e-5 * fd.abs().max(1e-4), "{fd} vs {}", g.data[q]);
            }
        }
    }
}
