//! `eval`: scores a checkpoint and the zero-filled / classical ISTA baselines
//! against ground truth on the test split.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::RunConfig;
use crate::data::dataset::{load_split, Split};
use crate::data::io::write_atomic;
use crate::data::truth::load_truth;
use crate::error::Result;
use crate::metrics::{evaluate, MetricReport};
use crate::recon::{ClassicalIsta, Reconstructor, UnrolledIsta, UnrolledParams, ZeroFilled};

pub(super) const EVAL_DIR: &str = "eval";
pub(super) const BASELINE_CSV: &str = "baselines.csv";

pub(super) struct MethodScores {
    pub name: String,
    pub rows: Vec<(String, MetricReport)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-subject CSV named after the checkpoint, e.g. `eval/final.csv`.
pub fn results_csv_path(run_dir: &Path, checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    run_dir.join(EVAL_DIR).join(format!("{stem}.csv"))
}

pub(super) fn run(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let params = UnrolledParams::load(checkpoint)?;
    let test = load_split(&cfg.dataset_dir, Split::Test)?;
    let truth = test
        .iter()
        .map(|s| load_truth(&cfg.dataset_dir, &s.subject_id))
        .collect::<Result<Vec<_>>>()?;

    let methods: Vec<Box<dyn Reconstructor>> = vec![
        Box::new(ZeroFilled),
        Box::new(ClassicalIsta(cfg.recon.clone())),
        Box::new(UnrolledIsta { params, transform: cfg.refine.train.transform }),
    ];
    let scores = methods
        .iter()
        .map(|m| {
            let rows = test
                .par_iter()
                .zip(&truth)
                .map(|(s, gt)| Ok((s.subject_id.clone(), evaluate(gt, &m.reconstruct(&s.target_k, &s.omega)?)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(MethodScores { name: m.name().to_string(), rows })
        })
        .collect::<Result<Vec<_>>>()?;

    let (model, baselines) = scores.split_last().expect("three methods");
    let mut csv = String::from("subject,psnr,ssim\n");
    for (id, r) in &model.rows {
        let _ = writeln!(csv, "{id},{:.6},{:.6}", r.psnr_db, r.ssim);
    }
    write_atomic(&results_csv_path(&cfg.run_dir, checkpoint), csv.as_bytes())?;

    let mut csv = String::from("method,subject,psnr,ssim\n");
    for m in baselines {
        for (id, r) in &m.rows {
            let _ = writeln!(csv, "{},{id},{:.6},{:.6}", m.name, r.psnr_db, r.ssim);
        }
    }
    write_atomic(&cfg.run_dir.join(EVAL_DIR).join(BASELINE_CSV), csv.as_bytes())?;

    println!("{} — {} test subjects, checkpoint {}", cfg.experiment, test.len(), checkpoint.display());
    println!("{:<14} {:>5}  {:>18}  {:>17}", "Method", "R", "PSNR (dB)", "SSIM");
    for m in &scores {
        let (p, ps) = mean_std(m.rows.iter().map(|(_, r)| r.psnr_db));
        let (s, ss) = mean_std(m.rows.iter().map(|(_, r)| r.ssim));
        println!("{:<14} {:>4}x  {:>9.4} ± {:<6.4}  {:>8.4} ± {:<6.4}", m.name, cfg.acceleration, p, ps, s, ss);
    }
    Ok(())
}
