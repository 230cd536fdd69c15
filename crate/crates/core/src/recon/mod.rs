//! Reconstructors: zero-filled baseline, classical ISTA for the ℓ1-regularized
//! least-squares problem, and trainable unrolled ISTA.

pub mod haar;
mod ista;
mod unrolled;

use std::str::FromStr;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{check_shape, encode_adjoint, ComplexImage, KSpace, Mask};

pub use haar::{haar_forward, haar_inverse};
pub use ista::{ista_classical, ista_classical_traced, objective};
pub use unrolled::{
    unrolled_backward, unrolled_forward, ForwardTape, ParamGrad, Phase, UnrolledParams,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

/// Sparsifying transform Ψ. Both variants are orthonormal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Haar { levels: usize },
}

impl Default for Transform {
    fn default() -> Self {
        Transform::Haar { levels: 2 }
    }
}

impl FromStr for Transform {
    type Err = Error;

    /// Accepts `identity`, `haar` (2 levels) or `haar:<levels>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "identity" => Ok(Transform::Identity),
            None if s == "haar" => Ok(Transform::default()),
            Some(("haar", levels)) => levels
                .parse()
                .ok()
                .filter(|&l| l > 0)
                .map(|levels| Transform::Haar { levels })
                .ok_or_else(|| Error::Config(format!("bad Haar level count `{levels}`"))),
            _ => Err(Error::Config(format!("unknown transform `{s}`"))),
        }
    }
}

impl Transform {
    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        match *self {
            Transform::Identity => Ok(()),
            Transform::Haar { levels } => haar::check_levels(height, width, levels),
        }
    }

    pub fn forward(&self, img: &ComplexImage) -> ComplexImage {
        match *self {
            Transform::Identity => img.clone(),
            Transform::Haar { levels } => {
                let (h, w) = img.shape();
                let mut data = img.data().to_vec();
                haar::forward_in_place(&mut data, h, w, levels);
                ComplexImage::from_raw(h, w, data)
            }
        }
    }

    pub fn inverse(&self, coeffs: &ComplexImage) -> ComplexImage {
        match *self {
            Transform::Identity => coeffs.clone(),
            Transform::Haar { levels } => {
                let (h, w) = coeffs.shape();
                let mut data = coeffs.data().to_vec();
                haar::inverse_in_place(&mut data, h, w, levels);
                ComplexImage::from_raw(h, w, data)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    /// ℓ1 weight λ.
    pub reg_weight: f64,
    pub num_iters: usize,
    pub transform: Transform,
    pub step_size: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            reg_weight: 1e-3,
            num_iters: 50,
            transform: Transform::default(),
            step_size: 1.0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::InvalidInput(format!("reg_weight {} must be >= 0", self.reg_weight)));
        }
        if self.num_iters == 0 {
            return Err(Error::InvalidInput("num_iters must be positive".into()));
        }
        // E^H E is a projection for a binary mask and unitary F, so L = 1.
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "step_size {} outside (0, 1]",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// A reconstruction map `f(y, Ω)`.
pub trait Reconstructor: Send + Sync {
    fn reconstruct(&self, y: &KSpace, omega: &Mask) -> Result<ComplexImage>;

    fn name(&self) -> &str;

    /// Serialized parameters; empty for parameter-free reconstructors.
    fn params_bytes(&self) -> Vec<u8> {
        Vec::new()
    }
}

pub struct ZeroFilled;

impl Reconstructor for ZeroFilled {
    fn reconstruct(&self, y: &KSpace, omega: &Mask) -> Result<ComplexImage> {
        zero_filled(y, omega)
    }

    fn name(&self) -> &str {
        "zero-filled"
    }
}

pub struct ClassicalIsta(pub ReconConfig);

impl Reconstructor for ClassicalIsta {
    fn reconstruct(&self, y: &KSpace, omega: &Mask) -> Result<ComplexImage> {
        ista_classical(y, omega, &self.0)
    }

    fn name(&self) -> &str {
        "ista"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledIsta {
    pub params: UnrolledParams,
    pub transform: Transform,
}

impl Reconstructor for UnrolledIsta {
    fn reconstruct(&self, y: &KSpace, omega: &Mask) -> Result<ComplexImage> {
        Ok(unrolled_forward(y, omega, &self.params, self.transform)?.0)
    }

    fn name(&self) -> &str {
        "unrolled-ista"
    }

    fn params_bytes(&self) -> Vec<u8> {
        self.params.to_bytes()
    }
}

/// `F^H (Ω ∘ y)`.
pub fn zero_filled(y: &KSpace, omega: &Mask) -> Result<ComplexImage> {
    check_shape(y.shape(), omega.shape(), "zero_filled")?;
    encode_adjoint(y, omega)
}

/// Complex soft threshold: shrinks the magnitude by `theta`, keeps the phase.
pub fn soft_threshold(v: Complex64, theta: f64) -> Complex64 {
    let mag = v.norm();
    if mag <= theta {
        Complex64::new(0.0, 0.0)
    } else {
        v * ((mag - theta) / mag)
    }
}
