//! `train`: baseline training (one stage) or iterative refinement.
//!
//! Reads only the train and val splits of the dataset.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::RunConfig;
use crate::data::dataset::{load_split, DatasetManifest, ManifestEntry, Split};
use crate::data::io::{sha256_hex, write_atomic, write_tensor, Tensor};
use crate::error::{Error, Result};
use crate::refine::{acquired_digest, run_refinement_with, StageOutput};
use crate::train::TrainSample;

pub(super) const FINAL_CHECKPOINT: &str = "final.krfp";
pub(super) const SUMMARY_FILE: &str = "summary.txt";
pub(super) const PARAMS_FILE: &str = "params.krfp";
pub(super) const STAGE_CSV: &str = "stage.csv";
pub(super) const STAGE_LOG: &str = "stage.log";
pub(super) const AUDIT_FILE: &str = "audit.txt";

/// Directory of zero-based stage `stage` (named one-based).
pub fn stage_dir(run_dir: &Path, stage: usize) -> PathBuf {
    run_dir.join(format!("stage_{}", stage + 1))
}

/// Writes the refined training set with a manifest and a per-subject audit
/// of the acquired samples.
fn write_refined(dir: &Path, original: &[TrainSample], refined: &[TrainSample]) -> Result<()> {
    let mut entries = Vec::new();
    let mut audit = String::from("# subject_id\tacquired_sha256_original\tacquired_sha256_refined\tstatus\n");
    for (o, r) in original.iter().zip(refined) {
        let rel = PathBuf::from("train").join(format!("{}.krt", r.subject_id));
        let hash = write_tensor(&dir.join(&rel), &Tensor::KSpace(r.target_k.clone()))?;
        write_tensor(&dir.join("masks").join(format!("{}.krt", r.subject_id)), &Tensor::Mask(r.omega.clone()))?;
        entries.push(ManifestEntry { subject_id: r.subject_id.clone(), path: rel, hash, split: Split::Train });

        let before = acquired_digest(o, &o.omega);
        let after = acquired_digest(r, &o.omega);
        let status = if before == after { "ok" } else { "MODIFIED" };
        let _ = writeln!(audit, "{}\t{before}\t{after}\t{status}", r.subject_id);
        if before != after {
            write_atomic(&dir.join(AUDIT_FILE), audit.as_bytes())?;
            return Err(Error::AcquiredDataModified(r.subject_id.clone()));
        }
    }
    DatasetManifest { entries, omega_hash: None }.write(dir)?;
    write_atomic(&dir.join(AUDIT_FILE), audit.as_bytes())
}

pub(super) fn run(cfg: &RunConfig) -> Result<()> {
    let original = load_split(&cfg.dataset_dir, Split::Train)?;
    let val = load_split(&cfg.dataset_dir, Split::Val)?;

    let observer = |out: &StageOutput<'_>| -> Result<()> {
        let dir = stage_dir(&cfg.run_dir, out.stage);
        out.params.save(&dir.join(PARAMS_FILE))?;
        write_atomic(&dir.join(STAGE_CSV), out.report.to_csv().as_bytes())?;
        write_atomic(&dir.join(STAGE_LOG), out.report.to_log().as_bytes())?;
        if out.stage > 0 {
            write_refined(&dir, &original, out.dataset)?;
        }
        eprintln!(
            "stage {}/{}: best epoch {} val loss {:e}",
            out.stage + 1,
            cfg.refine.num_stages,
            out.report.best_epoch,
            out.report.best_val_loss
        );
        Ok(())
    };

    let (params, state) = run_refinement_with(&original, &cfg.refine, &val, observer).map_err(|f| f.error)?;

    let final_path = cfg.run_dir.join(FINAL_CHECKPOINT);
    params.save(&final_path)?;
    let chosen = state.selected_stage(cfg.refine.final_selection).expect("at least one stage ran");

    let mut summary = String::new();
    let _ = writeln!(summary, "experiment\t{}", cfg.experiment);
    let _ = writeln!(summary, "master_seed\t{}", cfg.master_seed);
    let _ = writeln!(summary, "stages\t{}", cfg.refine.num_stages);
    let _ = writeln!(summary, "subjects\ttrain {} / val {}", original.len(), val.len());
    let _ = writeln!(summary, "# stage\tepochs\tbest_epoch\tbest_val_loss\tstopped_early");
    for r in &state.reports {
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{:e}\t{}",
            r.stage + 1,
            r.epochs.len(),
            r.best_epoch,
            r.best_val_loss,
            r.stopped_early
        );
    }
    let _ = writeln!(summary, "selected_stage\t{}", chosen + 1);
    let _ = writeln!(summary, "final_checkpoint\t{FINAL_CHECKPOINT}\t{}", sha256_hex(&params.to_bytes()));
    write_atomic(&cfg.run_dir.join(SUMMARY_FILE), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}
