//! Synthetic data, acquisition simulation and on-disk formats.
//!
//! Ground-truth images live in [`truth`]; the training and refinement paths
//! only ever go through [`dataset`], which has no route into `truth/`.

pub mod dataset;
pub mod io;
pub mod phantom;
pub mod truth;

pub use dataset::{build_dataset, load_split, DatasetManifest, ManifestEntry, Split};
pub use io::{read_tensor, write_tensor, Tensor};
pub use phantom::{gen_phantom, simulate_acquisition, PhantomKind, PhantomSpec};
