use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{check_shape, fft2c, ComplexImage, Mask};
use crate::train::TrainSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses { count: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub kind: PhantomKind,
    /// Per-component std of complex Gaussian k-space noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

struct Ellipse {
    intensity: f64,
    semi_x: f64,
    semi_y: f64,
    cx: f64,
    cy: f64,
    angle_deg: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// The 10-ellipse Shepp-Logan head with the higher-contrast intensities
/// commonly used for imaging (peak 1.0).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Pixel centers mapped onto `[-1, 1]²`, y pointing up.
fn pixel_coords(r: usize, c: usize, h: usize, w: usize) -> (f64, f64) {
    ((2 * c + 1) as f64 / w as f64 - 1.0, 1.0 - (2 * r + 1) as f64 / h as f64)
}

pub fn gen_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput("phantom dimensions must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise_sigma {} must be >= 0", spec.noise_sigma)));
    }
    let mut values = vec![0.0f64; h * w];
    match spec.kind {
        PhantomKind::SheppLogan => {
            let ellipses: Vec<Ellipse> = SHEPP_LOGAN
                .iter()
                .map(|&(intensity, semi_x, semi_y, cx, cy, angle_deg)| Ellipse {
                    intensity,
                    semi_x,
                    semi_y,
                    cx,
                    cy,
                    angle_deg,
                })
                .collect();
            for (i, v) in values.iter_mut().enumerate() {
                let (x, y) = pixel_coords(i / w, i % w, h, w);
                let sum: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
                // Cancelling intensities can leave tiny negative residues.
                *v = sum.max(0.0);
            }
            let peak = values.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                for v in &mut values {
                    *v /= peak;
                }
            }
        }
        PhantomKind::RandomEllipses { count } => {
            if count == 0 {
                return Err(Error::InvalidInput("random-ellipses phantom needs count >= 1".into()));
            }
            let mut rng = seed::rng(spec.seed);
            let ellipses: Vec<Ellipse> = (0..count)
                .map(|_| Ellipse {
                    intensity: rng.random_range(0.2..=1.0),
                    semi_x: rng.random_range(0.15..0.5),
                    semi_y: rng.random_range(0.15..0.5),
                    cx: rng.random_range(-0.5..0.5),
                    cy: rng.random_range(-0.5..0.5),
                    angle_deg: rng.random_range(0.0..180.0),
                })
                .collect();
            // Later ellipses paint over earlier ones.
            for (i, v) in values.iter_mut().enumerate() {
                let (x, y) = pixel_coords(i / w, i % w, h, w);
                if let Some(e) = ellipses.iter().rev().find(|e| e.contains(x, y)) {
                    *v = e.intensity;
                }
            }
        }
    }
    ComplexImage::from_real(h, w, &values)
}

/// `Ω ∘ (F img + n)` with `n` complex Gaussian, std `noise_sigma` per component.
pub fn simulate_acquisition(
    img: &ComplexImage,
    omega: &Mask,
    noise_sigma: f64,
    noise_seed: u64,
    subject_id: &str,
) -> Result<TrainSample> {
    check_shape(img.shape(), omega.shape(), "simulate_acquisition")?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise_sigma {noise_sigma} must be >= 0")));
    }
    let mut k = fft2c(img)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = seed::rng(noise_seed);
        for v in k.data_mut() {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    omega.apply(&mut k)?;
    TrainSample::new(k, omega.clone(), subject_id)
}
