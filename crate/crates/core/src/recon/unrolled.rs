//! Unrolled ISTA with one scalar step size and one scalar threshold per phase.
//!
//! Phase k maps
//!
//! ```text
//! r_k = x_{k-1} - rho_k * E^H (E x_{k-1} - y)
//! x_k = Ψ^T soft(Ψ r_k, theta_k)
//! ```
//!
//! starting from the zero-filled image. The forward pass records what the
//! reverse pass needs to produce exact parameter gradients.

use std::path::Path;

use rustfft::num_complex::Complex64;

use super::{zero_filled, Transform};
use crate::error::{Error, Result};
use crate::tensor::{normal_op, ComplexImage, KSpace, Mask};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KRFP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub rho: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledParams {
    pub phases: Vec<Phase>,
}

impl UnrolledParams {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let p = Self { phases };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(num_phases: usize, rho: f64, theta: f64) -> Result<Self> {
        Self::new(vec![Phase { rho, theta }; num_phases])
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidInput("unrolled network needs at least one phase".into()));
        }
        for (k, p) in self.phases.iter().enumerate() {
            if !p.rho.is_finite() || !p.theta.is_finite() || p.theta < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "phase {k}: rho {} / theta {} invalid",
                    p.rho, p.theta
                )));
            }
        }
        Ok(())
    }

    /// `KRFP`, u16 version, u32 phase count, then `(rho, theta)` f64 pairs,
    /// all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 16 * self.phases.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.phases.len() as u32).to_le_bytes());
        for p in &self.phases {
            out.extend_from_slice(&p.rho.to_le_bytes());
            out.extend_from_slice(&p.theta.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, msg: &str| Error::Format {
            offset: offset as u64,
            msg: msg.to_string(),
        };
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(fail(0, "bad checkpoint magic"));
        }
        let version = bytes
            .get(4..6)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or_else(|| fail(4, "truncated version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(4, &format!("unsupported checkpoint version {version}")));
        }
        let count = bytes
            .get(6..10)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")) as usize)
            .ok_or_else(|| fail(6, "truncated phase count"))?;
        let expected = count
            .checked_mul(16)
            .and_then(|n| n.checked_add(10))
            .ok_or_else(|| fail(6, "phase count overflows"))?;
        if bytes.len() < expected {
            return Err(fail(bytes.len(), &format!("truncated: expected {expected} bytes")));
        }
        if bytes.len() > expected {
            return Err(fail(expected, "trailing bytes after last phase"));
        }
        let read = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
        let phases = (0..count)
            .map(|k| Phase {
                rho: read(10 + 16 * k),
                theta: read(18 + 16 * k),
            })
            .collect();
        Self::new(phases).map_err(|e| fail(10, &e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::data::io::read_file(path)?)
    }
}

/// Gradient of a scalar loss with respect to every phase parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub d_rho: Vec<f64>,
    pub d_theta: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(num_phases: usize) -> Self {
        Self {
            d_rho: vec![0.0; num_phases],
            d_theta: vec![0.0; num_phases],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, scale: f64) {
        for (a, b) in self.d_rho.iter_mut().zip(&other.d_rho) {
            *a += scale * b;
        }
        for (a, b) in self.d_theta.iter_mut().zip(&other.d_theta) {
            *a += scale * b;
        }
    }
}

struct PhaseRecord {
    /// `E^H E x_{k-1} - E^H y`.
    residual: ComplexImage,
    /// `Ψ r_k`, before thresholding.
    coeffs: ComplexImage,
}

pub struct ForwardTape {
    params: UnrolledParams,
    mask: Mask,
    transform: Transform,
    records: Vec<PhaseRecord>,
}

impl ForwardTape {
    pub fn params(&self) -> &UnrolledParams {
        &self.params
    }

    pub fn num_phases(&self) -> usize {
        self.records.len()
    }

    /// Smallest `||c| - theta_k|` over every pre-threshold coefficient.
    /// Small values mean the loss is near a non-differentiable point.
    pub fn min_kink_distance(&self) -> f64 {
        self.records
            .iter()
            .zip(&self.params.phases)
            .flat_map(|(rec, p)| rec.coeffs.data().iter().map(move |c| (c.norm() - p.theta).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn unrolled_forward(
    y: &KSpace,
    omega: &Mask,
    params: &UnrolledParams,
    transform: Transform,
) -> Result<(ComplexImage, ForwardTape)> {
    params.validate()?;
    transform.check(y.height(), y.width())?;
    let b = zero_filled(y, omega)?;
    let mut x = b.clone();
    let mut records = Vec::with_capacity(params.len());

    for (k, phase) in params.phases.iter().enumerate() {
        let ax = normal_op(&x, omega);
        let residual: Vec<Complex64> = ax.data().iter().zip(b.data()).map(|(a, bb)| a - bb).collect();
        let r: Vec<Complex64> = x
            .data()
            .iter()
            .zip(&residual)
            .map(|(&xi, &gi)| xi - phase.rho * gi)
            .collect();
        let coeffs = transform.forward(&ComplexImage::from_raw(x.height(), x.width(), r));
        let mut shrunk = coeffs.clone();
        for v in shrunk.data_mut() {
            *v = super::soft_threshold(*v, phase.theta);
        }
        x = transform.inverse(&shrunk);
        if !x.is_finite() {
            return Err(Error::NumericOverflow { phase: k });
        }
        records.push(PhaseRecord {
            residual: ComplexImage::from_raw(x.height(), x.width(), residual),
            coeffs,
        });
    }

    let tape = ForwardTape {
        params: params.clone(),
        mask: omega.clone(),
        transform,
        records,
    };
    Ok((x, tape))
}

/// Reverse pass. `loss_grad` is `∂L/∂Re x_K + i ∂L/∂Im x_K`.
///
/// At the soft-threshold kink (`|c| == theta`) the zero side is taken, so
/// the coefficient contributes nothing.
pub fn unrolled_backward(
    tape: &ForwardTape,
    params: &UnrolledParams,
    loss_grad: &ComplexImage,
) -> Result<ParamGrad> {
    if params != &tape.params {
        return Err(Error::InvalidTape("parameters differ from the forward pass".into()));
    }
    if tape.records.len() != params.len() {
        return Err(Error::InvalidTape(format!(
            "tape has {} phases, params have {}",
            tape.records.len(),
            params.len()
        )));
    }
    if loss_grad.shape() != tape.mask.shape() {
        return Err(Error::InvalidTape(format!(
            "loss gradient shape {:?} does not match tape {:?}",
            loss_grad.shape(),
            tape.mask.shape()
        )));
    }

    let mut grad = ParamGrad::zeros(params.len());
    let mut x_bar = loss_grad.clone();
    for (k, (phase, rec)) in params.phases.iter().zip(&tape.records).enumerate().rev() {
        let s_bar = tape.transform.forward(&x_bar);
        let mut d_theta = 0.0;
        let c_bar: Vec<Complex64> = rec
            .coeffs
            .data()
            .iter()
            .zip(s_bar.data())
            .map(|(&c, &sb)| {
                let mag = c.norm();
                if mag <= phase.theta {
                    return Complex64::new(0.0, 0.0);
                }
                let u = c / mag;
                let along = (u.conj() * sb).re;
                d_theta -= along;
                let ratio = phase.theta / mag;
                sb * (1.0 - ratio) + u * (ratio * along)
            })
            .collect();
        grad.d_theta[k] = d_theta;

        let r_bar = tape
            .transform
            .inverse(&ComplexImage::from_raw(x_bar.height(), x_bar.width(), c_bar));
        grad.d_rho[k] = -r_bar.inner(&rec.residual).re;

        let ar = normal_op(&r_bar, &tape.mask);
        let next: Vec<Complex64> = r_bar
            .data()
            .iter()
            .zip(ar.data())
            .map(|(&rb, &a)| rb - phase.rho * a)
            .collect();
        x_bar = ComplexImage::from_raw(r_bar.height(), r_bar.width(), next);
    }
    Ok(grad)
}
