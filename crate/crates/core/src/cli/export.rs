//! `export-images`: 8-bit PGM magnitude reconstructions and error maps.

use std::path::Path;

use super::RunConfig;
use crate::data::dataset::{load_split, Split};
use crate::data::io::write_atomic;
use crate::data::truth::load_truth;
use crate::error::{Error, Result};
use crate::recon::{Reconstructor, UnrolledIsta, UnrolledParams};
use crate::tensor::ComplexImage;

pub(super) const EXPORT_DIR: &str = "export";

/// Binary PGM with each value mapped to `min(255, round(v * multiplier))`.
pub fn encode_pgm(width: usize, height: usize, values: &[f64], multiplier: f64) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v * multiplier).round().clamp(0.0, 255.0) as u8));
    out
}

fn abs_error(recon: &ComplexImage, truth: &ComplexImage) -> Vec<f64> {
    recon.data().iter().zip(truth.data()).map(|(a, b)| (a - b).norm()).collect()
}

pub(super) fn run(cfg: &RunConfig, checkpoint: &Path, subjects: &[String]) -> Result<()> {
    let model = UnrolledIsta { params: UnrolledParams::load(checkpoint)?, transform: cfg.refine.train.transform };
    let test = load_split(&cfg.dataset_dir, Split::Test)?;
    let pool = if subjects.is_empty() {
        test
    } else {
        let mut all = load_split(&cfg.dataset_dir, Split::Val)?;
        all.extend(test);
        subjects
            .iter()
            .map(|id| {
                all.iter().find(|s| &s.subject_id == id).cloned().ok_or_else(|| {
                    Error::Config(format!("subject `{id}` is not in the val or test split"))
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let out_dir = cfg.run_dir.join(EXPORT_DIR);
    for sample in &pool {
        let id = &sample.subject_id;
        let truth = load_truth(&cfg.dataset_dir, id)?;
        let recon = model.reconstruct(&sample.target_k, &sample.omega)?;
        let peak = truth.magnitude().into_iter().fold(0.0, f64::max);
        let peak = if peak > 0.0 { peak } else { 1.0 };
        let magnitude_multiplier = 255.0 / peak;
        let error_multiplier = cfg.error_scale * 255.0 / peak;
        let (h, w) = recon.shape();

        write_atomic(
            &out_dir.join(format!("{id}_recon.pgm")),
            &encode_pgm(w, h, &recon.magnitude(), magnitude_multiplier),
        )?;
        write_atomic(
            &out_dir.join(format!("{id}_error.pgm")),
            &encode_pgm(w, h, &abs_error(&recon, &truth), error_multiplier),
        )?;
        let sidecar = format!(
            "# pixel = min(255, round(value * multiplier)); value = |recon| or |recon - truth|\n\
             subject\t{id}\n\
             checkpoint\t{}\n\
             magnitude_multiplier\t{magnitude_multiplier}\n\
             error_scale\t{}\n\
             error_multiplier\t{error_multiplier}\n",
            checkpoint.display(),
            cfg.error_scale
        );
        write_atomic(&out_dir.join(format!("{id}_scale.txt")), sidecar.as_bytes())?;
        println!("{id}: {}/{id}_recon.pgm, {id}_error.pgm", out_dir.display());
    }
    Ok(())
}
