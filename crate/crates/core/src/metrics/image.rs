use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{SarImage, Split};

/// Returned by [`psnr`] when the images are identical.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// `C1 = (K1·MAX)²`, `C2 = (K2·MAX)²` with these `K`.
pub const SSIM_C1: f64 = 0.01;
pub const SSIM_C2: f64 = 0.03;

fn check_shapes(x: &SarImage, y: &SarImage) -> Result<()> {
    x.check_same_shape(y)
}

/// `10·log10(MAX²/MSE)`; [`PSNR_IDENTICAL`] when the MSE is zero.
pub fn psnr(x: &SarImage, y: &SarImage, max_val: f64) -> Result<f64> {
    check_shapes(x, y)?;
    if !(max_val > 0.0) {
        return Err(Error::InvalidParameter(format!("PSNR peak must be positive, got {max_val}")));
    }
    if x.data.is_empty() {
        return Err(Error::Empty("PSNR of an empty image".into()));
    }
    let mse = x.data.iter().zip(&y.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable window: `kx` along columns, `ky` along rows. Only windows that
/// fit entirely inside the image are produced.
struct Window {
    kx: Vec<f64>,
    ky: Vec<f64>,
    h: usize,
    w: usize,
}

impl Window {
    /// The 11×11 Gaussian window, or one uniform window over the whole image
    /// when the image is smaller than that.
    fn for_shape(h: usize, w: usize) -> Self {
        if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
            let k = gaussian_kernel();
            Self { kx: k.clone(), ky: k, h, w }
        } else {
            Self {
                kx: vec![1.0 / w as f64; w],
                ky: vec![1.0 / h as f64; h],
                h,
                w,
            }
        }
    }

    fn out_shape(&self) -> (usize, usize) {
        (self.h + 1 - self.ky.len(), self.w + 1 - self.kx.len())
    }

    fn filter(&self, img: &[f64]) -> Vec<f64> {
        let (oh, ow) = self.out_shape();
        let mut tmp = vec![0.0; self.h * ow];
        for r in 0..self.h {
            let row = &img[r * self.w..(r + 1) * self.w];
            for c in 0..ow {
                tmp[r * ow + c] = self.kx.iter().zip(&row[c..]).map(|(k, v)| k * v).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for (i, k) in self.ky.iter().enumerate() {
                let src = &tmp[(r + i) * ow..(r + i + 1) * ow];
                for (o, v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                    *o += k * v;
                }
            }
        }
        out
    }

    /// Transpose of [`Window::filter`].
    fn adjoint(&self, map: &[f64]) -> Vec<f64> {
        let (oh, ow) = self.out_shape();
        let mut tmp = vec![0.0; self.h * ow];
        for r in 0..oh {
            for (i, k) in self.ky.iter().enumerate() {
                let dst = &mut tmp[(r + i) * ow..(r + i + 1) * ow];
                for (d, v) in dst.iter_mut().zip(&map[r * ow..(r + 1) * ow]) {
                    *d += k * v;
                }
            }
        }
        let mut out = vec![0.0; self.h * self.w];
        for r in 0..self.h {
            for c in 0..ow {
                let v = tmp[r * ow + c];
                for (j, k) in self.kx.iter().enumerate() {
                    out[r * self.w + c + j] += k * v;
                }
            }
        }
        out
    }
}

struct SsimParts {
    value: f64,
    /// `∂S̄/∂x` when requested.
    grad: Option<Vec<f64>>,
}

fn ssim_impl(x: &SarImage, y: &SarImage, max_val: f64, want_grad: bool) -> Result<SsimParts> {
    check_shapes(x, y)?;
    if x.data.is_empty() {
        return Err(Error::Empty("SSIM of an empty image".into()));
    }
    let c1 = (SSIM_C1 * max_val).powi(2);
    let c2 = (SSIM_C2 * max_val).powi(2);
    let win = Window::for_shape(x.height, x.width);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = win.filter(&x.data);
    let mu_y = win.filter(&y.data);
    let e_xx = win.filter(&sq(&x.data, &x.data));
    let e_yy = win.filter(&sq(&y.data, &y.data));
    let e_xy = win.filter(&sq(&x.data, &y.data));

    let n = mu_x.len() as f64;
    let mut total = 0.0;
    let (mut d_mu, mut d_exx, mut d_exy) = if want_grad {
        (vec![0.0; mu_x.len()], vec![0.0; mu_x.len()], vec![0.0; mu_x.len()])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cxy = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * cxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = vx + vy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            d_mu[i] = (2.0 * my * (a2 - a1) / (b1 * b2) - 2.0 * mx * s * (1.0 / b1 - 1.0 / b2)) / n;
            d_exx[i] = -s / b2 / n;
            d_exy[i] = 2.0 * a1 / (b1 * b2) / n;
        }
    }
    let grad = want_grad.then(|| {
        let gm = win.adjoint(&d_mu);
        let gxx = win.adjoint(&d_exx);
        let gxy = win.adjoint(&d_exy);
        (0..x.data.len())
            .map(|q| gm[q] + 2.0 * x.data[q] * gxx[q] + y.data[q] * gxy[q])
            .collect()
    });
    Ok(SsimParts { value: total / n, grad })
}

/// Mean SSIM over all 11×11 Gaussian windows (σ = 1.5) that fit inside the
/// image, with `MAX = 1`. Smaller images use one uniform global window.
pub fn ssim(x: &SarImage, y: &SarImage) -> Result<f64> {
    ssim_with_max(x, y, 1.0)
}

pub fn ssim_with_max(x: &SarImage, y: &SarImage, max_val: f64) -> Result<f64> {
    Ok(ssim_impl(x, y, max_val, false)?.value)
}

/// SSIM and its gradient with respect to `x`.
pub fn ssim_with_grad(x: &SarImage, y: &SarImage, max_val: f64) -> Result<(f64, SarImage)> {
    let parts = ssim_impl(x, y, max_val, true)?;
    let grad = SarImage {
        height: x.height,
        width: x.width,
        data: parts.grad.unwrap_or_default(),
    };
    Ok((parts.value, grad))
}

fn finite_or_str<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

/// Metrics of one rendered view against its reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub split: Split,
    #[serde(serialize_with = "finite_or_str")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetricsReport {
    pub views: Vec<ViewMetrics>,
    #[serde(serialize_with = "finite_or_str")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Reserved for an external perceptual metric.
    pub lpips: Option<f64>,
}

impl ImageMetricsReport {
    /// Mean PSNR and SSIM over the views of one split, if it has any.
    pub fn split_mean(&self, split: Split) -> Option<(f64, f64)> {
        let sel: Vec<&ViewMetrics> = self.views.iter().filter(|v| v.split == split).collect();
        if sel.is_empty() {
            return None;
        }
        let n = sel.len() as f64;
        Some((sel.iter().map(|v| v.psnr).sum::<f64>() / n, sel.iter().map(|v| v.ssim).sum::<f64>() / n))
    }
}

/// Per-view PSNR and SSIM with `MAX = max_val`, and their means.
pub fn image_metrics(pairs: &[(SarImage, SarImage, Split)], max_val: f64) -> Result<ImageMetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("no views to evaluate".into()));
    }
    let views = pairs
        .iter()
        .enumerate()
        .map(|(view, (x, y, split))| {
            Ok(ViewMetrics {
                view,
                split: *split,
                psnr: psnr(x, y, max_val)?,
                ssim: ssim_with_max(x, y, max_val)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = views.len() as f64;
    Ok(ImageMetricsReport {
        mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        views,
        lpips: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SarImage {
        SarImage::from_vec(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let x = SarImage::zeros(4, 4);
        let y = SarImage::from_vec(4, 4, vec![0.1; 16]).unwrap();
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-12);
        let y = SarImage::from_vec(4, 4, vec![1.0; 16]).unwrap();
        assert_eq!(psnr(&x, &y, 1.0).unwrap(), 0.0);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), PSNR_IDENTICAL);
        assert!(psnr(&x, &SarImage::zeros(4, 5), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(&mut rng, 20, 17);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let (a, b) = (0.3, 0.7);
        let xa = SarImage::from_vec(16, 16, vec![a; 256]).unwrap();
        let xb = SarImage::from_vec(16, 16, vec![b; 256]).unwrap();
        let c1 = SSIM_C1 * SSIM_C1;
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        assert!((ssim(&xa, &xb).unwrap() - expected).abs() < 1e-12);
        // Below the window size the global window gives the same closed form.
        let sa = SarImage::from_vec(5, 5, vec![a; 25]).unwrap();
        let sb = SarImage::from_vec(5, 5, vec![b; 25]).unwrap();
        assert!((ssim(&sa, &sb).unwrap() - expected).abs() < 1e-12);
    }

    /// Straight per-window evaluation, as an independent check of the separable path.
    fn ssim_direct(x: &SarImage, y: &SarImage) -> f64 {
        let k = gaussian_kernel();
        let (c1, c2) = (SSIM_C1 * SSIM_C1, SSIM_C2 * SSIM_C2);
        let mut total = 0.0;
        let mut n = 0;
        for r in 0..=x.height - SSIM_WINDOW {
            for c in 0..=x.width - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let w = k[i] * k[j];
                        let (a, b) = (x.get(r + i, c + j), y.get(r + i, c + j));
                        mx += w * a;
                        my += w * b;
                        sxx += w * a * a;
                        syy += w * b * b;
                        sxy += w * a * b;
                    }
                }
                let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn ssim_matches_direct_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 19, 23);
        let y = random(&mut rng, 19, 23);
        assert!((ssim(&x, &y).unwrap() - ssim_direct(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_binary_image_is_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = SarImage::from_vec(32, 32, (0..1024).map(|_| if rng.gen() { 1.0 } else { 0.0 }).collect()).unwrap();
        let y = SarImage::from_vec(32, 32, x.data.iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&x, &y).unwrap() < 0.5);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (h, w) in [(14, 13), (6, 9)] {
            let x = random(&mut rng, h, w);
            let y = random(&mut rng, h, w);
            let (_, g) = ssim_with_grad(&x, &y, 1.0).unwrap();
            let eps = 1e-6;
            for q in 0..x.data.len() {
                let mut xp = x.clone();
                xp.data[q] += eps;
                let mut xm = x.clone();
                xm.data[q] -= eps;
                let fd = (ssim(&xp, &y).unwrap() - ssim(&xm, &y).unwrap()) / (2.0 * eps);
                assert!((fd - g.data[q]).abs() <= 1e-6 * fd.abs().max(1e-3), "q {q}: {fd} vs {}", g.data[q]);
            }
        }
    }

    #[test]
    fn report_means_and_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, 12, 12);
        let y = random(&mut rng, 12, 12);
        let r = image_metrics(&[(x.clone(), x.clone(), Split::Test), (x, y, Split::Train)], 1.0).unwrap();
        assert_eq!(r.mean_psnr, f64::INFINITY);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""));
    }

    proptest! {
        #[test]
        fn psnr_of_identity_beats_any_other(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, 8, 8);
            let mut y = x.clone();
            y.data[rng.gen_range(0..64)] += 0.01;
            prop_assert!(psnr(&x, &x, 1.0).unwrap() > psnr(&x, &y, 1.0).unwrap());
            let s = ssim(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
