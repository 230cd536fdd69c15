//! PSNR and SSIM on magnitude images. Used only for evaluation against
//! ground truth, never inside training.

use crate::error::{Error, Result};
use crate::tensor::{check_shape, ComplexImage};

/// Reported PSNR when the two images agree exactly.
pub const PSNR_CAP_DB: f64 = 200.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn evaluate(reference: &ComplexImage, test: &ComplexImage) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(reference, test)?,
        ssim: ssim(reference, test)?,
    })
}

fn peak(values: &[f64]) -> f64 {
    values.iter().cloned().fold(0.0, f64::max)
}

/// `10 log10(peak² / MSE)` with the peak taken from the reference magnitude.
pub fn psnr(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    check_shape(reference.shape(), test.shape(), "psnr")?;
    let a = reference.magnitude();
    let b = test.magnitude();
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let peak = peak(&a);
    if peak == 0.0 {
        return Err(Error::InvalidInput("PSNR reference image is all zero".into()));
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is `(h - n + 1) x (w - n + 1)`.
fn filter_valid(values: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * values[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5), evaluated at
/// every position where the window fits. The dynamic range is the maximum
/// reference magnitude.
pub fn ssim(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    check_shape(reference.shape(), test.shape(), "ssim")?;
    let (h, w) = reference.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let a = reference.magnitude();
    let b = test.magnitude();
    let range = peak(&a);
    if range == 0.0 {
        return Err(Error::InvalidInput("SSIM reference image is all zero".into()));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, h, w, &taps);
    let mu_b = filter_valid(&b, h, w, &taps);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &taps);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &taps);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &taps);

    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    fn ramp(n: usize) -> ComplexImage {
        let v: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        ComplexImage::from_real(n, n, &v).unwrap()
    }

    #[test]
    fn psnr_cap_and_analytic_values() {
        let r = ramp(16);
        assert_eq!(psnr(&r, &r).unwrap(), PSNR_CAP_DB);

        let mut base = vec![0.5; 64];
        base[0] = 1.0;
        let reference = ComplexImage::from_real(8, 8, &base).unwrap();
        for (err, expect) in [(0.1, 20.0), (0.01, 40.0)] {
            let shifted: Vec<f64> = base.iter().map(|v| v + err).collect();
            let test = ComplexImage::from_real(8, 8, &shifted).unwrap();
            assert!((psnr(&reference, &test).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_decreases_with_error() {
        let r = ramp(16);
        let mut last = f64::INFINITY;
        for step in 1..20 {
            let e = step as f64 * 0.01;
            let t: Vec<f64> = r.magnitude().iter().map(|v| v + e).collect();
            let p = psnr(&r, &ComplexImage::from_real(16, 16, &t).unwrap()).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_and_scaling() {
        let r = ramp(16);
        assert_eq!(ssim(&r, &r).unwrap(), 1.0);
        let mut half = r.clone();
        half.scale(0.5);
        let s = ssim(&r, &half).unwrap();
        assert!(s > 0.0 && s < 1.0, "{s}");
    }

    #[test]
    fn metrics_ignore_global_phase() {
        let r = ramp(16);
        let mut noisy = r.clone();
        for (i, v) in noisy.data_mut().iter_mut().enumerate() {
            *v += Complex64::new(((i * 7) % 5) as f64 * 0.01, 0.0);
        }
        let rot = Complex64::from_polar(1.0, 0.9);
        let mut rotated = noisy.clone();
        for v in rotated.data_mut() {
            *v *= rot;
        }
        assert!((psnr(&r, &noisy).unwrap() - psnr(&r, &rotated).unwrap()).abs() < 1e-9);
        assert!((ssim(&r, &noisy).unwrap() - ssim(&r, &rotated).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let r = ramp(10);
        assert!(matches!(ssim(&r, &r), Err(Error::Dimension(_))));
    }

    #[test]
    fn taps_are_normalized() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
