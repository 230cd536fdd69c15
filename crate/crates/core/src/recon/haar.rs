//! Orthonormal multilevel 2-D Haar transform on complex images.
//!
//! Coefficients use the usual nested layout: after each level the
//! approximation occupies the top-left quadrant of the region just
//! transformed, and the next level recurses into it.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::ComplexImage;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn check_levels(height: usize, width: usize, levels: usize) -> Result<()> {
    let block = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| Error::Dimension(format!("{levels} Haar levels is too many")))?;
    if levels == 0 || height % block != 0 || width % block != 0 {
        return Err(Error::Dimension(format!(
            "{height}x{width} image is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// One analysis step along a strided line of `2 * half` samples.
fn analyze(line: &mut [Complex64], scratch: &mut [Complex64]) {
    let half = line.len() / 2;
    for i in 0..half {
        let (a, b) = (line[2 * i], line[2 * i + 1]);
        scratch[i] = (a + b) * INV_SQRT2;
        scratch[half + i] = (a - b) * INV_SQRT2;
    }
    line.copy_from_slice(&scratch[..line.len()]);
}

fn synthesize(line: &mut [Complex64], scratch: &mut [Complex64]) {
    let half = line.len() / 2;
    for i in 0..half {
        let (s, d) = (line[i], line[half + i]);
        scratch[2 * i] = (s + d) * INV_SQRT2;
        scratch[2 * i + 1] = (s - d) * INV_SQRT2;
    }
    line.copy_from_slice(&scratch[..line.len()]);
}

fn apply_level(
    data: &mut [Complex64],
    stride: usize,
    rows: usize,
    cols: usize,
    step: fn(&mut [Complex64], &mut [Complex64]),
    rows_first: bool,
) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); rows.max(cols)];
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    let do_rows = |data: &mut [Complex64], scratch: &mut [Complex64]| {
        for r in 0..rows {
            step(&mut data[r * stride..r * stride + cols], scratch);
        }
    };
    let do_cols = |data: &mut [Complex64], scratch: &mut [Complex64], column: &mut [Complex64]| {
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * stride + c];
            }
            step(column, scratch);
            for r in 0..rows {
                data[r * stride + c] = column[r];
            }
        }
    };
    if rows_first {
        do_rows(data, &mut scratch);
        do_cols(data, &mut scratch, &mut column);
    } else {
        do_cols(data, &mut scratch, &mut column);
        do_rows(data, &mut scratch);
    }
}

pub(crate) fn forward_in_place(data: &mut [Complex64], height: usize, width: usize, levels: usize) {
    for l in 0..levels {
        apply_level(data, width, height >> l, width >> l, analyze, true);
    }
}

pub(crate) fn inverse_in_place(data: &mut [Complex64], height: usize, width: usize, levels: usize) {
    for l in (0..levels).rev() {
        apply_level(data, width, height >> l, width >> l, synthesize, false);
    }
}

pub fn haar_forward(img: &ComplexImage, levels: usize) -> Result<ComplexImage> {
    let (h, w) = img.shape();
    check_levels(h, w, levels)?;
    let mut data = img.data().to_vec();
    forward_in_place(&mut data, h, w, levels);
    Ok(ComplexImage::from_raw(h, w, data))
}

pub fn haar_inverse(coeffs: &ComplexImage, levels: usize) -> Result<ComplexImage> {
    let (h, w) = coeffs.shape();
    check_levels(h, w, levels)?;
    let mut data = coeffs.data().to_vec();
    inverse_in_place(&mut data, h, w, levels);
    Ok(ComplexImage::from_raw(h, w, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexImage::new(h, w, data).unwrap()
    }

    #[test]
    fn constant_image_has_only_approximation() {
        let img = ComplexImage::from_real(4, 6, &[3.0; 24]).unwrap();
        let c = haar_forward(&img, 1).unwrap();
        for r in 0..4 {
            for col in 0..6 {
                let v = c.get(r, col);
                if r < 2 && col < 3 {
                    assert!((v.re - 6.0).abs() < 1e-12 && v.im == 0.0);
                } else {
                    assert!(v.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_trip_and_energy() {
        for levels in 1..=3 {
            let img = random(16, 16, levels as u64);
            let c = haar_forward(&img, levels).unwrap();
            assert!((c.norm() - img.norm()).abs() <= 1e-6 * img.norm());
            let back = haar_inverse(&c, levels).unwrap();
            let err: f64 = back.data().iter().zip(img.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(err.sqrt() <= 1e-6 * img.norm());
        }
    }

    #[test]
    fn inverse_is_adjoint() {
        let x = random(8, 8, 1);
        let y = random(8, 8, 2);
        let lhs = haar_forward(&x, 2).unwrap().inner(&y);
        let rhs = x.inner(&haar_inverse(&y, 2).unwrap());
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn indivisible_dimensions_rejected() {
        let img = ComplexImage::zeros(12, 8);
        assert!(haar_forward(&img, 2).is_ok());
        assert!(matches!(haar_forward(&img, 3), Err(Error::Dimension(_))));
        assert!(matches!(haar_forward(&img, 0), Err(Error::Dimension(_))));
    }
}
