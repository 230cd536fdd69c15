//! C ABI over `kspace-refine`.
//!
//! Objects are opaque heap handles created by `kr_*_new`/producer functions
//! and released with the matching `kr_*_free`. Every fallible call returns a
//! [`KrStatus`]; on failure [`kr_last_error`] describes the problem for the
//! calling thread. Output handles are written only on success.
//!
//! Complex buffers are interleaved `(re, im)` doubles in row-major order,
//! `2 * height * width` values long. Masks are one byte per point (0 or 1).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use kspace_refine::data::io::{read_tensor, write_tensor, Tensor};
use kspace_refine::data::phantom::{gen_phantom, simulate_acquisition, PhantomKind, PhantomSpec};
use kspace_refine::masks::{gen_lambda, gen_omega, LambdaSpec, LineKind, MaskSpec};
use kspace_refine::metrics::{psnr, ssim};
use kspace_refine::recon::{ista_classical, unrolled_forward, zero_filled, Phase, ReconConfig, Transform, UnrolledParams};
use kspace_refine::tensor::{fft2c, ifft2c};
use kspace_refine::{Complex64, ComplexImage, Error, KSpace, Mask};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KrStatus {
    Ok = 0,
    /// Null pointer, bad size or out-of-range value.
    InvalidArgument = 1,
    /// Operand shapes disagree.
    Dimension = 2,
    /// Mask or Λ request cannot be satisfied.
    Infeasible = 3,
    /// Λ is not a subset of Ω.
    MaskViolation = 4,
    /// Non-finite values or failed numeric check.
    Numeric = 5,
    /// Malformed tensor or checkpoint file.
    Format = 6,
    Io = 7,
    Internal = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Complex image (spatial domain).
pub struct KrImage(ComplexImage);
/// Complex k-space grid.
pub struct KrKSpace(KSpace);
/// Boolean sampling mask.
pub struct KrMask(Mask);
/// Unrolled ISTA parameters: one `(rho, theta)` pair per phase.
pub struct KrParams(UnrolledParams);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(KrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Config(_) => KrStatus::InvalidArgument,
            Error::Dimension(_) => KrStatus::Dimension,
            Error::InfeasibleSpec(_) | Error::InfeasibleRatio { .. } => KrStatus::Infeasible,
            Error::MaskViolation => KrStatus::MaskViolation,
            Error::NumericOverflow { .. } | Error::Numeric(_) => KrStatus::Numeric,
            Error::Format { .. } => KrStatus::Format,
            Error::Io { .. } => KrStatus::Io,
            _ => KrStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(KrStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            KrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            KrStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{what} is null")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn complex_in(data: *const f64, height: usize, width: usize) -> Result<Vec<Complex64>, Failure> {
    let n = height.checked_mul(width).ok_or_else(|| invalid("size overflow"))?;
    if data.is_null() {
        return Err(invalid("data is null"));
    }
    let raw = std::slice::from_raw_parts(data, 2 * n);
    Ok(raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

unsafe fn complex_out(values: &[Complex64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output buffer is null"));
    }
    if len != 2 * values.len() {
        return Err(invalid(format!("buffer holds {len} doubles, need {}", 2 * values.len())));
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, v) in dst.chunks_exact_mut(2).zip(values) {
        d[0] = v.re;
        d[1] = v.im;
    }
    Ok(())
}

fn transform_of(haar_levels: u32) -> Transform {
    match haar_levels {
        0 => Transform::Identity,
        levels => Transform::Haar { levels: levels as usize },
    }
}

fn line_kind(kind: u32) -> Result<LineKind, Failure> {
    match kind {
        0 => Ok(LineKind::RandomLine),
        1 => Ok(LineKind::EquispacedLine),
        k => Err(invalid(format!("unknown line kind {k}"))),
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn kr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---- images -------------------------------------------------------------

/// # Safety
/// `data` must point to `2 * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_image_new(height: usize, width: usize, data: *const f64, out: *mut *mut KrImage) -> KrStatus {
    guard(|| {
        let img = ComplexImage::new(height, width, complex_in(data, height, width)?)?;
        emit(out, KrImage(img))
    })
}

/// # Safety
/// `img` must be a live handle; `height`/`width` may be null.
#[no_mangle]
pub unsafe extern "C" fn kr_image_shape(img: *const KrImage, height: *mut usize, width: *mut usize) -> KrStatus {
    guard(|| {
        let (h, w) = handle(img, "image")?.0.shape();
        if let Some(p) = height.as_mut() {
            *p = h;
        }
        if let Some(p) = width.as_mut() {
            *p = w;
        }
        Ok(())
    })
}

/// Copies interleaved values into `out` (`len` must equal `2 * height * width`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_image_data(img: *const KrImage, out: *mut f64, len: usize) -> KrStatus {
    guard(|| complex_out(handle(img, "image")?.0.data(), out, len))
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_image_free(img: *mut KrImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

// ---- k-space ------------------------------------------------------------

/// # Safety
/// `data` must point to `2 * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_new(height: usize, width: usize, data: *const f64, out: *mut *mut KrKSpace) -> KrStatus {
    guard(|| {
        let k = KSpace::new(height, width, complex_in(data, height, width)?)?;
        emit(out, KrKSpace(k))
    })
}

/// # Safety
/// `k` must be a live handle; `height`/`width` may be null.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_shape(k: *const KrKSpace, height: *mut usize, width: *mut usize) -> KrStatus {
    guard(|| {
        let (h, w) = handle(k, "k-space")?.0.shape();
        if let Some(p) = height.as_mut() {
            *p = h;
        }
        if let Some(p) = width.as_mut() {
            *p = w;
        }
        Ok(())
    })
}

/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_data(k: *const KrKSpace, out: *mut f64, len: usize) -> KrStatus {
    guard(|| complex_out(handle(k, "k-space")?.0.data(), out, len))
}

/// # Safety
/// `k` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_free(k: *mut KrKSpace) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

// ---- masks --------------------------------------------------------------

/// # Safety
/// `kept` must point to `height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_new(height: usize, width: usize, kept: *const u8, out: *mut *mut KrMask) -> KrStatus {
    guard(|| {
        let n = height.checked_mul(width).ok_or_else(|| invalid("size overflow"))?;
        if kept.is_null() {
            return Err(invalid("kept is null"));
        }
        let bits = std::slice::from_raw_parts(kept, n).iter().map(|&b| b != 0).collect();
        emit(out, KrMask(Mask::new(height, width, bits)?))
    })
}

/// Number of kept points.
///
/// # Safety
/// `mask` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_kept_count(mask: *const KrMask, count: *mut usize) -> KrStatus {
    guard(|| {
        let n = handle(mask, "mask")?.0.kept_count();
        *count.as_mut().ok_or_else(|| invalid("count is null"))? = n;
        Ok(())
    })
}

/// # Safety
/// `out` must point to `len` writable bytes; `len` must equal `height * width`.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_data(mask: *const KrMask, out: *mut u8, len: usize) -> KrStatus {
    guard(|| {
        let kept = handle(mask, "mask")?.0.kept();
        if out.is_null() || len != kept.len() {
            return Err(invalid(format!("mask buffer must hold {} bytes", kept.len())));
        }
        for (d, &k) in std::slice::from_raw_parts_mut(out, len).iter_mut().zip(kept) {
            *d = k as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_free(mask: *mut KrMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Cartesian line mask. `kind`: 0 random lines, 1 equispaced lines.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_lines(
    height: usize,
    width: usize,
    acceleration: usize,
    acs_lines: usize,
    kind: u32,
    seed: u64,
    out: *mut *mut KrMask,
) -> KrStatus {
    guard(|| {
        let spec = MaskSpec { height, width, acceleration, acs_lines, kind: line_kind(kind)?, seed };
        emit(out, KrMask(gen_omega(&spec)?))
    })
}

/// Self-supervision input mask Λ ⊆ Ω.
///
/// # Safety
/// `omega` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_lambda(
    omega: *const KrMask,
    target_ratio: f64,
    low_freq_band: usize,
    seed: u64,
    out: *mut *mut KrMask,
) -> KrStatus {
    guard(|| {
        let omega = &handle(omega, "omega")?.0;
        let lambda = gen_lambda(omega, &LambdaSpec::new(target_ratio, low_freq_band, seed))?;
        emit(out, KrMask(lambda))
    })
}

// ---- data ---------------------------------------------------------------

/// Modified Shepp-Logan phantom when `ellipses == 0`, otherwise `ellipses`
/// random ellipses drawn from `seed`. Peak magnitude 1.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_phantom(height: usize, width: usize, ellipses: usize, seed: u64, out: *mut *mut KrImage) -> KrStatus {
    guard(|| {
        let kind = match ellipses {
            0 => PhantomKind::SheppLogan,
            count => PhantomKind::RandomEllipses { count },
        };
        let img = gen_phantom(&PhantomSpec { height, width, kind, noise_sigma: 0.0, seed })?;
        emit(out, KrImage(img))
    })
}

/// Undersampled noisy acquisition `Ω ∘ (F img + n)`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_simulate(
    img: *const KrImage,
    omega: *const KrMask,
    noise_sigma: f64,
    noise_seed: u64,
    out: *mut *mut KrKSpace,
) -> KrStatus {
    guard(|| {
        let sample = simulate_acquisition(&handle(img, "image")?.0, &handle(omega, "omega")?.0, noise_sigma, noise_seed, "ffi")?;
        emit(out, KrKSpace(sample.target_k))
    })
}

/// Centered orthonormal 2-D FFT.
///
/// # Safety
/// `img` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_fft2c(img: *const KrImage, out: *mut *mut KrKSpace) -> KrStatus {
    guard(|| emit(out, KrKSpace(fft2c(&handle(img, "image")?.0)?)))
}

/// Inverse of [`kr_fft2c`].
///
/// # Safety
/// `k` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_ifft2c(k: *const KrKSpace, out: *mut *mut KrImage) -> KrStatus {
    guard(|| emit(out, KrImage(ifft2c(&handle(k, "k-space")?.0)?)))
}

// ---- reconstruction -----------------------------------------------------

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_zero_filled(y: *const KrKSpace, omega: *const KrMask, out: *mut *mut KrImage) -> KrStatus {
    guard(|| emit(out, KrImage(zero_filled(&handle(y, "y")?.0, &handle(omega, "omega")?.0)?)))
}

/// Classical ISTA. `haar_levels == 0` selects the identity transform.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_ista(
    y: *const KrKSpace,
    omega: *const KrMask,
    reg_weight: f64,
    num_iters: usize,
    haar_levels: u32,
    step_size: f64,
    out: *mut *mut KrImage,
) -> KrStatus {
    guard(|| {
        let cfg = ReconConfig { reg_weight, num_iters, transform: transform_of(haar_levels), step_size };
        emit(out, KrImage(ista_classical(&handle(y, "y")?.0, &handle(omega, "omega")?.0, &cfg)?))
    })
}

/// Unrolled ISTA forward pass with the given parameters.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_unrolled(
    y: *const KrKSpace,
    omega: *const KrMask,
    params: *const KrParams,
    haar_levels: u32,
    out: *mut *mut KrImage,
) -> KrStatus {
    guard(|| {
        let (img, _) = unrolled_forward(
            &handle(y, "y")?.0,
            &handle(omega, "omega")?.0,
            &handle(params, "params")?.0,
            transform_of(haar_levels),
        )?;
        emit(out, KrImage(img))
    })
}

// ---- parameters ---------------------------------------------------------

/// `num_phases` phases sharing the same `(rho, theta)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_params_uniform(num_phases: usize, rho: f64, theta: f64, out: *mut *mut KrParams) -> KrStatus {
    guard(|| emit(out, KrParams(UnrolledParams::uniform(num_phases, rho, theta)?)))
}

/// # Safety
/// `rho` and `theta` must each point to `num_phases` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_params_new(num_phases: usize, rho: *const f64, theta: *const f64, out: *mut *mut KrParams) -> KrStatus {
    guard(|| {
        if rho.is_null() || theta.is_null() {
            return Err(invalid("rho/theta is null"));
        }
        let rho = std::slice::from_raw_parts(rho, num_phases);
        let theta = std::slice::from_raw_parts(theta, num_phases);
        let phases = rho.iter().zip(theta).map(|(&rho, &theta)| Phase { rho, theta }).collect();
        emit(out, KrParams(UnrolledParams::new(phases)?))
    })
}

/// # Safety
/// `params` must be live and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_params_len(params: *const KrParams, count: *mut usize) -> KrStatus {
    guard(|| {
        let n = handle(params, "params")?.0.len();
        *count.as_mut().ok_or_else(|| invalid("count is null"))? = n;
        Ok(())
    })
}

/// # Safety
/// `params` must be live; `rho` and `theta` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_params_get(params: *const KrParams, phase: usize, rho: *mut f64, theta: *mut f64) -> KrStatus {
    guard(|| {
        let p = handle(params, "params")?
            .0
            .phases
            .get(phase)
            .ok_or_else(|| invalid(format!("phase {phase} out of range")))?;
        *rho.as_mut().ok_or_else(|| invalid("rho is null"))? = p.rho;
        *theta.as_mut().ok_or_else(|| invalid("theta is null"))? = p.theta;
        Ok(())
    })
}

/// Reads a `KRFP` checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_params_load(path: *const c_char, out: *mut *mut KrParams) -> KrStatus {
    guard(|| emit(out, KrParams(UnrolledParams::load(&path_arg(path)?)?)))
}

/// # Safety
/// `params` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kr_params_save(params: *const KrParams, path: *const c_char) -> KrStatus {
    guard(|| Ok(handle(params, "params")?.0.save(&path_arg(path)?)?))
}

/// # Safety
/// `params` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_params_free(params: *mut KrParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

// ---- metrics ------------------------------------------------------------

/// PSNR in dB of `test` against `reference` magnitudes (capped at 200).
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_psnr(reference: *const KrImage, test: *const KrImage, out: *mut f64) -> KrStatus {
    guard(|| {
        let v = psnr(&handle(reference, "reference")?.0, &handle(test, "test")?.0)?;
        *out.as_mut().ok_or_else(|| invalid("out is null"))? = v;
        Ok(())
    })
}

/// Gaussian-window SSIM on magnitudes.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_ssim(reference: *const KrImage, test: *const KrImage, out: *mut f64) -> KrStatus {
    guard(|| {
        let v = ssim(&handle(reference, "reference")?.0, &handle(test, "test")?.0)?;
        *out.as_mut().ok_or_else(|| invalid("out is null"))? = v;
        Ok(())
    })
}

// ---- KRT1 tensor files --------------------------------------------------

/// # Safety
/// `img` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kr_image_write(img: *const KrImage, path: *const c_char) -> KrStatus {
    guard(|| {
        write_tensor(&path_arg(path)?, &Tensor::Image(handle(img, "image")?.0.clone()))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_image_read(path: *const c_char, out: *mut *mut KrImage) -> KrStatus {
    guard(|| emit(out, KrImage(read_tensor(&path_arg(path)?)?.into_image()?)))
}

/// # Safety
/// `k` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_write(k: *const KrKSpace, path: *const c_char) -> KrStatus {
    guard(|| {
        write_tensor(&path_arg(path)?, &Tensor::KSpace(handle(k, "k-space")?.0.clone()))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_kspace_read(path: *const c_char, out: *mut *mut KrKSpace) -> KrStatus {
    guard(|| emit(out, KrKSpace(read_tensor(&path_arg(path)?)?.into_kspace()?)))
}

/// # Safety
/// `mask` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_write(mask: *const KrMask, path: *const c_char) -> KrStatus {
    guard(|| {
        write_tensor(&path_arg(path)?, &Tensor::Mask(handle(mask, "mask")?.0.clone()))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kr_mask_read(path: *const c_char, out: *mut *mut KrMask) -> KrStatus {
    guard(|| emit(out, KrMask(read_tensor(&path_arg(path)?)?.into_mask()?)))
}
