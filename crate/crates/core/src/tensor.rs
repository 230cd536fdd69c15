//! Complex 2-D grids, the centered orthonormal Fourier transform pair and the
//! masked encoding operator.
//!
//! Images and k-space are both stored row-major. K-space is DC-centered: the
//! zero frequency sits at `(height / 2, width / 2)` for every size, odd or even.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

macro_rules! complex_grid {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            height: usize,
            width: usize,
            data: Vec<Complex64>,
        }

        impl $name {
            pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
                if height == 0 || width == 0 {
                    return Err(Error::InvalidInput(format!(
                        "{} must have positive dimensions, got {}x{}",
                        stringify!($name), height, width
                    )));
                }
                if data.len() != height * width {
                    return Err(Error::Dimension(format!(
                        "{}x{} grid needs {} samples, got {}",
                        height, width, height * width, data.len()
                    )));
                }
                if let Some(idx) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::InvalidInput(format!("non-finite sample at index {idx}")));
                }
                Ok(Self { height, width, data })
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                assert!(height > 0 && width > 0, "grid dimensions must be positive");
                Self { height, width, data: vec![Complex64::new(0.0, 0.0); height * width] }
            }

            /// Builds from real values (imaginary parts zero).
            pub fn from_real(height: usize, width: usize, values: &[f64]) -> Result<Self> {
                Self::new(height, width, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            }

            /// Wraps data without the finiteness scan. Callers inside the crate
            /// use this for intermediate results whose finiteness is checked
            /// elsewhere (or not required).
            pub(crate) fn from_raw(height: usize, width: usize, data: Vec<Complex64>) -> Self {
                debug_assert_eq!(data.len(), height * width);
                Self { height, width, data }
            }

            pub fn height(&self) -> usize { self.height }
            pub fn width(&self) -> usize { self.width }
            pub fn shape(&self) -> (usize, usize) { (self.height, self.width) }
            pub fn len(&self) -> usize { self.data.len() }
            pub fn is_empty(&self) -> bool { self.data.is_empty() }
            pub fn data(&self) -> &[Complex64] { &self.data }
            pub fn data_mut(&mut self) -> &mut [Complex64] { &mut self.data }
            pub fn into_data(self) -> Vec<Complex64> { self.data }

            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.data[row * self.width + col]
            }

            pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
                self.data[row * self.width + col] = value;
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            }

            pub fn norm(&self) -> f64 {
                self.norm_sqr().sqrt()
            }

            pub fn norm_sqr(&self) -> f64 {
                self.data.iter().map(|v| v.norm_sqr()).sum()
            }

            /// Complex inner product `<self, other>`, conjugating `self`.
            pub fn inner(&self, other: &Self) -> Complex64 {
                self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
            }

            pub fn magnitude(&self) -> Vec<f64> {
                self.data.iter().map(|v| v.norm()).collect()
            }

            pub fn scale(&mut self, factor: f64) {
                for v in &mut self.data {
                    *v *= factor;
                }
            }

            pub(crate) fn check_finite(&self) -> Result<()> {
                if self.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("{} contains non-finite samples", stringify!($name))))
                }
            }
        }
    };
}

complex_grid!(
    /// Image-domain complex grid.
    ComplexImage
);
complex_grid!(
    /// DC-centered frequency-domain complex grid.
    KSpace
);

/// Boolean sampling pattern over a k-space grid. Always keeps at least one point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    kept: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, kept: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "mask must have positive dimensions, got {height}x{width}"
            )));
        }
        if kept.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} mask needs {} entries, got {}",
                height * width,
                kept.len()
            )));
        }
        if !kept.iter().any(|&k| k) {
            return Err(Error::InvalidInput("mask keeps no points".into()));
        }
        Ok(Self {
            height,
            width,
            kept,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            kept: vec![true; height * width],
        }
    }

    /// Line mask keeping every column of the listed rows.
    pub fn from_rows(height: usize, width: usize, rows: &[usize]) -> Result<Self> {
        let mut kept = vec![false; height * width];
        for &r in rows {
            if r >= height {
                return Err(Error::Dimension(format!("row {r} outside height {height}")));
            }
            kept[r * width..(r + 1) * width].fill(true);
        }
        Self::new(height, width, kept)
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn kept(&self) -> &[bool] {
        &self.kept
    }
    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        self.kept[row * self.width + col]
    }
    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    /// Rows holding at least one kept point, ascending.
    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.height)
            .filter(|&r| self.kept[r * self.width..(r + 1) * self.width].iter().any(|&k| k))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.kept.iter().zip(&other.kept).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        check_shape(self.shape(), other.shape(), "mask union")?;
        Ok(Mask {
            height: self.height,
            width: self.width,
            kept: self.kept.iter().zip(&other.kept).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Zeroes every unkept sample of `ksp` in place.
    pub fn apply(&self, ksp: &mut KSpace) -> Result<()> {
        check_shape(self.shape(), ksp.shape(), "mask apply")?;
        for (v, &k) in ksp.data_mut().iter_mut().zip(&self.kept) {
            if !k {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        Ok(())
    }

    pub fn masked(&self, ksp: &KSpace) -> Result<KSpace> {
        let mut out = ksp.clone();
        self.apply(&mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_shape(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )))
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

/// Circularly shifts a row-major grid by `(dr, dc)`.
fn roll(data: &[Complex64], height: usize, width: usize, dr: usize, dc: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..height {
        let rr = (r + dr) % height;
        for c in 0..width {
            out[rr * width + (c + dc) % width] = data[r * width + c];
        }
    }
    out
}

/// Unnormalized in-place 2-D DFT over rows then columns.
fn dft2(data: &mut [Complex64], height: usize, width: usize, forward: bool) {
    let (row_fwd, row_inv) = plans(width);
    let row_plan = if forward { row_fwd } else { row_inv };
    row_plan.process(data);

    let (col_fwd, col_inv) = plans(height);
    let col_plan = if forward { col_fwd } else { col_inv };
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_plan.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

fn centered_transform(
    data: &[Complex64],
    height: usize,
    width: usize,
    forward: bool,
) -> Vec<Complex64> {
    // ifftshift moves the center to the origin, fftshift moves it back.
    let mut buf = roll(data, height, width, height - height / 2, width - width / 2);
    dft2(&mut buf, height, width, forward);
    let mut out = roll(&buf, height, width, height / 2, width / 2);
    let scale = 1.0 / ((height * width) as f64).sqrt();
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// Centered orthonormal 2-D DFT.
pub fn fft2c(img: &ComplexImage) -> Result<KSpace> {
    img.check_finite()?;
    Ok(fft2c_unchecked(img))
}

/// Inverse of [`fft2c`].
pub fn ifft2c(ksp: &KSpace) -> Result<ComplexImage> {
    ksp.check_finite()?;
    Ok(ifft2c_unchecked(ksp))
}

pub(crate) fn fft2c_unchecked(img: &ComplexImage) -> KSpace {
    let (h, w) = img.shape();
    KSpace::from_raw(h, w, centered_transform(img.data(), h, w, true))
}

pub(crate) fn ifft2c_unchecked(ksp: &KSpace) -> ComplexImage {
    let (h, w) = ksp.shape();
    ComplexImage::from_raw(h, w, centered_transform(ksp.data(), h, w, false))
}

/// `E_Ω x = Ω ∘ F x`. Unkept samples are exactly zero.
pub fn encode(img: &ComplexImage, mask: &Mask) -> Result<KSpace> {
    check_shape(img.shape(), mask.shape(), "encode")?;
    let mut k = fft2c(img)?;
    mask.apply(&mut k)?;
    Ok(k)
}

/// `E_Ω^H y = F^H (Ω ∘ y)`.
pub fn encode_adjoint(ksp: &KSpace, mask: &Mask) -> Result<ComplexImage> {
    check_shape(ksp.shape(), mask.shape(), "encode_adjoint")?;
    ksp.check_finite()?;
    Ok(ifft2c_unchecked(&mask.masked(ksp)?))
}

/// `E_Ω^H E_Ω x`: projection onto images whose spectrum is supported on Ω.
pub(crate) fn normal_op(img: &ComplexImage, mask: &Mask) -> ComplexImage {
    let mut k = fft2c_unchecked(img);
    for (v, &kept) in k.data_mut().iter_mut().zip(mask.kept()) {
        if !kept {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    ifft2c_unchecked(&k)
}

/// Replaces reconstructed samples with acquired ones wherever `mask` is kept.
pub fn data_consistency(recon_k: &KSpace, acquired_k: &KSpace, mask: &Mask) -> Result<KSpace> {
    check_shape(recon_k.shape(), acquired_k.shape(), "data_consistency")?;
    check_shape(recon_k.shape(), mask.shape(), "data_consistency")?;
    let data = recon_k
        .data()
        .iter()
        .zip(acquired_k.data())
        .zip(mask.kept())
        .map(|((&r, &a), &k)| if k { a } else { r })
        .collect();
    Ok(KSpace::from_raw(recon_k.height(), recon_k.width(), data))
}
