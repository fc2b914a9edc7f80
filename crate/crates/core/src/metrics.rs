//! Image quality metrics with peak value 1.0.

use crate::error::{Error, Result};
use crate::measurement::SceneImage;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &SceneImage, b: &SceneImage) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filtering: output is (h-10)×(w-10).
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * img[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained 11×11 Gaussian windows
/// (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim(a: &SceneImage, b: &SceneImage) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("images differ in shape"));
    }
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs both dimensions >= {SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let k = gaussian_kernel();
    let (x, y) = (a.pixels(), b.pixels());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mu_x = filter_valid(x, h, w, &k);
    let mu_y = filter_valid(y, h, w, &k);
    let e_xx = filter_valid(&xx, h, w, &k);
    let e_yy = filter_valid(&yy, h, w, &k);
    let e_xy = filter_valid(&xy, h, w, &k);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> SceneImage {
        SceneImage::new(
            h,
            w,
            (0..h * w)
                .map(|i| ((i % w) as f64 / w as f64 + (i / w) as f64 / (2.0 * h as f64)) / 1.5)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = gradient_image(4, 4);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let a = SceneImage::constant(4, 4, 0.5).unwrap();
        let b = SceneImage::constant(4, 4, 0.6).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = gradient_image(16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = SceneImage::new(16, 16, a.pixels().iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 1.0);
    }

    #[test]
    fn ssim_rejects_small_or_mismatched() {
        let a = gradient_image(10, 16);
        assert!(matches!(ssim(&a, &a), Err(Error::BadShape(_))));
        let b = gradient_image(16, 16);
        let c = gradient_image(16, 12);
        assert!(ssim(&b, &c).is_err());
        assert!(psnr(&b, &c).is_err());
    }
}
