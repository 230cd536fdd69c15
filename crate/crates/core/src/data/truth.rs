//! Ground-truth access for evaluation. Only the evaluation and image export
//! commands use this module.

use std::path::{Path, PathBuf};

use super::dataset::TRUTH_DIR;
use super::io::read_tensor;
use crate::error::Result;
use crate::tensor::ComplexImage;

pub fn truth_path(dataset_dir: &Path, subject_id: &str) -> PathBuf {
    dataset_dir.join(TRUTH_DIR).join(format!("{subject_id}.krt"))
}

pub fn load_truth(dataset_dir: &Path, subject_id: &str) -> Result<ComplexImage> {
    read_tensor(&truth_path(dataset_dir, subject_id))?.into_image()
}
