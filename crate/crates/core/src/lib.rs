//! Self-supervised compressed-sensing MRI reconstruction with iterative
//! refinement of the training data.
//!
//! The pieces, bottom up:
//!
//! - [`tensor`]: complex grids, the centered orthonormal FFT pair, the masked
//!   encoding operator and data consistency.
//! - [`masks`]: Cartesian acquisition masks, self-supervision subset masks and
//!   simulated-mask banks.
//! - [`recon`]: zero-filled, classical ISTA and trainable unrolled ISTA.
//! - [`train`]: the self-supervised loss, Adam and the epoch loop.
//! - [`refine`]: the stage loop that retrains on refined data.
//! - [`metrics`]: PSNR and SSIM.
//! - [`data`]: phantoms, acquisition simulation, tensor files and manifests.
//! - [`cli`]: the `kspace-refine` command-line harness.

pub mod cli;
pub mod data;
pub mod error;
pub mod masks;
pub mod metrics;
pub mod recon;
pub mod refine;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use tensor::{ComplexImage, KSpace, Mask};
