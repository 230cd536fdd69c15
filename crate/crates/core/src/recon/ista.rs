use rustfft::num_complex::Complex64;

use super::{soft_threshold, zero_filled, ReconConfig, Transform};
use crate::error::{Error, Result};
use crate::tensor::{check_shape, fft2c_unchecked, normal_op, ComplexImage, KSpace, Mask};

/// Slack allowed on per-iteration objective increases before ISTA is
/// declared divergent.
const MONOTONE_SLACK: f64 = 1e-9;

/// `½‖Ω∘F x − Ω∘y‖² + λ‖Ψ x‖₁`, with the ℓ1 norm over complex magnitudes.
pub fn objective(
    x: &ComplexImage,
    y: &KSpace,
    omega: &Mask,
    reg_weight: f64,
    transform: Transform,
) -> Result<f64> {
    check_shape(x.shape(), y.shape(), "objective")?;
    check_shape(x.shape(), omega.shape(), "objective")?;
    transform.check(x.height(), x.width())?;
    let k = fft2c_unchecked(x);
    let fidelity: f64 = k
        .data()
        .iter()
        .zip(y.data())
        .zip(omega.kept())
        .filter(|(_, &kept)| kept)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum();
    let l1: f64 = transform.forward(x).data().iter().map(|v| v.norm()).sum();
    Ok(0.5 * fidelity + reg_weight * l1)
}

pub fn ista_classical(y: &KSpace, omega: &Mask, cfg: &ReconConfig) -> Result<ComplexImage> {
    ista_classical_traced(y, omega, cfg).map(|(x, _)| x)
}

/// Runs ISTA from the zero-filled image and returns the final iterate with
/// the objective after every iteration (entry 0 is the starting objective).
pub fn ista_classical_traced(
    y: &KSpace,
    omega: &Mask,
    cfg: &ReconConfig,
) -> Result<(ComplexImage, Vec<f64>)> {
    cfg.validate()?;
    cfg.transform.check(y.height(), y.width())?;
    let b = zero_filled(y, omega)?;
    let threshold = cfg.step_size * cfg.reg_weight;
    let mut x = b.clone();
    let mut trace = Vec::with_capacity(cfg.num_iters + 1);
    trace.push(objective(&x, y, omega, cfg.reg_weight, cfg.transform)?);

    for iter in 0..cfg.num_iters {
        let ax = normal_op(&x, omega);
        let data: Vec<Complex64> = x
            .data()
            .iter()
            .zip(ax.data())
            .zip(b.data())
            .map(|((&xi, &ai), &bi)| xi - cfg.step_size * (ai - bi))
            .collect();
        let mut coeffs = cfg.transform.forward(&ComplexImage::from_raw(x.height(), x.width(), data));
        for v in coeffs.data_mut() {
            *v = soft_threshold(*v, threshold);
        }
        x = cfg.transform.inverse(&coeffs);
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite ISTA iterate at iteration {}", iter + 1)));
        }
        let obj = objective(&x, y, omega, cfg.reg_weight, cfg.transform)?;
        let prev = *trace.last().expect("trace starts non-empty");
        if obj > prev + MONOTONE_SLACK {
            return Err(Error::Internal(format!(
                "ISTA objective rose from {prev} to {obj} at iteration {}; adjoint is inconsistent",
                iter + 1
            )));
        }
        trace.push(obj);
    }
    Ok((x, trace))
}
