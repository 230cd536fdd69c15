//! The `KRT1` tensor format, atomic file writes and a process-wide record of
//! every file the library opens.
//!
//! Layout: magic `KRT1`, u8 kind (0 image, 1 k-space, 2 mask), u32 height,
//! u32 width, then the little-endian payload: interleaved `(re, im)` f64
//! pairs for kinds 0 and 1, one byte (0 or 1) per point for masks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rustfft::num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{ComplexImage, KSpace, Mask};

pub const TENSOR_MAGIC: &[u8; 4] = b"KRT1";
const HEADER_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

static ACCESS_LOG: Mutex<Vec<(Access, PathBuf)>> = Mutex::new(Vec::new());

fn record(access: Access, path: &Path) {
    ACCESS_LOG
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push((access, path.to_path_buf()));
}

/// Every path opened through this module since process start.
pub fn access_log() -> Vec<(Access, PathBuf)> {
    ACCESS_LOG.lock().unwrap_or_else(|e| e.into_inner()).clone()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    record(Access::Read, path);
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    record(Access::Read, path);
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    record(Access::Write, path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    Image(ComplexImage),
    KSpace(KSpace),
    Mask(Mask),
}

impl Tensor {
    fn kind(&self) -> u8 {
        match self {
            Tensor::Image(_) => 0,
            Tensor::KSpace(_) => 1,
            Tensor::Mask(_) => 2,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Tensor::Image(t) => t.shape(),
            Tensor::KSpace(t) => t.shape(),
            Tensor::Mask(t) => t.shape(),
        }
    }

    pub fn into_image(self) -> Result<ComplexImage> {
        match self {
            Tensor::Image(t) => Ok(t),
            _ => Err(Error::Format { offset: 4, msg: "expected an image tensor".into() }),
        }
    }

    pub fn into_kspace(self) -> Result<KSpace> {
        match self {
            Tensor::KSpace(t) => Ok(t),
            _ => Err(Error::Format { offset: 4, msg: "expected a k-space tensor".into() }),
        }
    }

    pub fn into_mask(self) -> Result<Mask> {
        match self {
            Tensor::Mask(t) => Ok(t),
            _ => Err(Error::Format { offset: 4, msg: "expected a mask tensor".into() }),
        }
    }
}

impl From<ComplexImage> for Tensor {
    fn from(t: ComplexImage) -> Self {
        Tensor::Image(t)
    }
}

impl From<KSpace> for Tensor {
    fn from(t: KSpace) -> Self {
        Tensor::KSpace(t)
    }
}

impl From<Mask> for Tensor {
    fn from(t: Mask) -> Self {
        Tensor::Mask(t)
    }
}

fn push_complex(out: &mut Vec<u8>, data: &[Complex64]) {
    for v in data {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let (h, w) = t.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * h * w);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(t.kind());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    match t {
        Tensor::Image(img) => push_complex(&mut out, img.data()),
        Tensor::KSpace(k) => push_complex(&mut out, k.data()),
        Tensor::Mask(m) => out.extend(m.kept().iter().map(|&k| k as u8)),
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let fail = |offset: usize, msg: String| Error::Format { offset: offset as u64, msg };
    if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
        return Err(fail(0, "bad magic, expected KRT1".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    let kind = bytes[4];
    let h = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    if h == 0 || w == 0 {
        return Err(fail(5, format!("zero dimension {h}x{w}")));
    }
    let per_point = match kind {
        0 | 1 => 16,
        2 => 1,
        k => return Err(fail(4, format!("unknown tensor kind {k}"))),
    };
    let payload_len = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(per_point))
        .ok_or_else(|| fail(5, "dimensions overflow".into()))?;
    let expected = HEADER_LEN + payload_len;
    if bytes.len() < expected {
        return Err(fail(bytes.len(), format!("truncated payload: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(fail(expected, "trailing bytes after payload".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    let wrap = |offset: usize| move |e: Error| fail(offset, e.to_string());
    match kind {
        2 => {
            let mut kept = Vec::with_capacity(h * w);
            for (i, &b) in payload.iter().enumerate() {
                match b {
                    0 => kept.push(false),
                    1 => kept.push(true),
                    other => return Err(fail(HEADER_LEN + i, format!("mask byte {other} is not 0 or 1"))),
                }
            }
            Ok(Tensor::Mask(Mask::new(h, w, kept).map_err(wrap(HEADER_LEN))?))
        }
        _ => {
            let read = |i: usize| f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().expect("8 bytes"));
            let data: Vec<Complex64> = (0..h * w).map(|i| Complex64::new(read(2 * i), read(2 * i + 1))).collect();
            if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(fail(HEADER_LEN + 16 * i, "non-finite sample".into()));
            }
            Ok(if kind == 0 {
                Tensor::Image(ComplexImage::from_raw(h, w, data))
            } else {
                Tensor::KSpace(KSpace::from_raw(h, w, data))
            })
        }
    }
}

/// Writes `t` atomically and returns the SHA-256 of the bytes written.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<String> {
    let bytes = encode_tensor(t);
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&read_file(path)?)
}
