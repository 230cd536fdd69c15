//! Dataset assembly and loading.
//!
//! A dataset directory holds `omega.krt` (the shared acquisition mask),
//! `<split>/<subject>.krt` k-space files, `truth/<subject>.krt` ground-truth
//! images for the validation and test subjects, and `manifest.txt`. Loading
//! functions here read only the manifest, the mask and the k-space files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::masks::{gen_omega, MaskSpec};
use crate::seed::{self, tag};
use crate::train::TrainSample;

use super::io::{read_tensor, read_text, sha256_hex, write_atomic, write_tensor, Tensor};
use super::phantom::{gen_phantom, simulate_acquisition, PhantomSpec};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const OMEGA_FILE: &str = "omega.krt";
pub const TRUTH_DIR: &str = "truth";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format { offset: 0, msg: format!("unknown split `{other}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub subject_id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub hash: String,
    pub split: Split,
}

/// Line-oriented manifest: `subject_id<TAB>relative_path<TAB>hex_sha256<TAB>split`.
/// Lines starting with `#` are comments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Hash of `omega.krt`, carried in a `# omega` comment line.
    pub omega_hash: Option<String>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# subject_id\trelative_path\tsha256\tsplit\n");
        if let Some(h) = &self.omega_hash {
            out.push_str(&format!("# omega\t{OMEGA_FILE}\t{h}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.subject_id, e.path.display(), e.hash, e.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        let mut offset = 0u64;
        for line in text.lines() {
            let here = offset;
            offset += line.len() as u64 + 1;
            if let Some(rest) = line.strip_prefix("# omega\t") {
                let hash = rest.split('\t').nth(1).ok_or_else(|| Error::Format {
                    offset: here,
                    msg: "omega line needs path and hash".into(),
                })?;
                manifest.omega_hash = Some(hash.to_string());
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, path, hash, split] = fields[..] else {
                return Err(Error::Format { offset: here, msg: format!("expected 4 tab-separated fields, got {}", fields.len()) });
            };
            manifest.entries.push(ManifestEntry {
                subject_id: id.to_string(),
                path: PathBuf::from(path),
                hash: hash.to_string(),
                split: split.parse().map_err(|_| Error::Format { offset: here, msg: format!("unknown split `{split}`") })?,
            });
        }
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::parse(&read_text(&dir.join(MANIFEST_FILE))?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), self.to_text().as_bytes())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Checks split disjointness and recomputes every hash against `dir`.
    pub fn audit(&self, dir: &Path) -> Result<()> {
        let mut seen = std::collections::HashMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(e.subject_id.as_str(), e.split) {
                return Err(Error::InvalidInput(format!(
                    "subject {} listed in {prev} and {}",
                    e.subject_id, e.split
                )));
            }
            let actual = sha256_hex(&super::io::read_file(&dir.join(&e.path))?);
            if actual != e.hash {
                return Err(Error::InvalidInput(format!("hash mismatch for {}", e.path.display())));
            }
        }
        if let Some(h) = &self.omega_hash {
            if &sha256_hex(&super::io::read_file(&dir.join(OMEGA_FILE))?) != h {
                return Err(Error::InvalidInput(format!("hash mismatch for {OMEGA_FILE}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub phantom: PhantomSpec,
    pub mask: MaskSpec,
}

pub fn subject_id(index: usize) -> String {
    format!("s{index:04}")
}

/// Generates every subject, writes k-space, truth images (val/test only),
/// the shared mask and the manifest. Subject `i` uses phantom seed
/// `phantom.seed + i`.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0 {
        return Err(Error::Config("n_train, n_val and n_test must all be at least 1".into()));
    }
    let omega = gen_omega(&spec.mask)?;
    let omega_hash = write_tensor(&out_dir.join(OMEGA_FILE), &Tensor::Mask(omega.clone()))?;

    let splits = std::iter::repeat_n(Split::Train, spec.n_train)
        .chain(std::iter::repeat_n(Split::Val, spec.n_val))
        .chain(std::iter::repeat_n(Split::Test, spec.n_test));
    let mut entries = Vec::new();
    for (index, split) in splits.enumerate() {
        let id = subject_id(index);
        let phantom_spec = PhantomSpec { seed: spec.phantom.seed.wrapping_add(index as u64), ..spec.phantom.clone() };
        let img = gen_phantom(&phantom_spec)?;
        let noise_seed = seed::derive(spec.phantom.seed, &[tag::NOISE, index as u64]);
        let sample = simulate_acquisition(&img, &omega, spec.phantom.noise_sigma, noise_seed, &id)?;
        let rel = PathBuf::from(split.as_str()).join(format!("{id}.krt"));
        let hash = write_tensor(&out_dir.join(&rel), &Tensor::KSpace(sample.target_k))?;
        if split != Split::Train {
            write_tensor(&out_dir.join(TRUTH_DIR).join(format!("{id}.krt")), &Tensor::Image(img))?;
        }
        entries.push(ManifestEntry { subject_id: id, path: rel, hash, split });
    }
    let manifest = DatasetManifest { entries, omega_hash: Some(omega_hash) };
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Loads one split as training samples, verifying each file's hash.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<TrainSample>> {
    let manifest = DatasetManifest::load(dir)?;
    let omega = read_tensor(&dir.join(OMEGA_FILE))?.into_mask()?;
    manifest
        .split(split)
        .map(|e| {
            let path = dir.join(&e.path);
            let bytes = super::io::read_file(&path)?;
            if sha256_hex(&bytes) != e.hash {
                return Err(Error::InvalidInput(format!("hash mismatch for {}", path.display())));
            }
            let k = super::io::decode_tensor(&bytes)?.into_kspace()?;
            TrainSample::new(k, omega.clone(), e.subject_id.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::phantom::PhantomKind;
    use crate::masks::LineKind;

    fn spec(seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_train: 4,
            n_val: 2,
            n_test: 2,
            phantom: PhantomSpec {
                height: 16,
                width: 16,
                kind: PhantomKind::RandomEllipses { count: 3 },
                noise_sigma: 0.001,
                seed,
            },
            mask: MaskSpec { height: 16, width: 16, acceleration: 4, acs_lines: 2, kind: LineKind::RandomLine, seed },
        }
    }

    #[test]
    fn build_audit_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(&spec(3), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 8);
        m.audit(dir.path()).unwrap();
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
        let train = load_split(dir.path(), Split::Train).unwrap();
        assert_eq!(train.len(), 4);
        assert!(!dir.path().join("truth/s0000.krt").exists());
        assert!(dir.path().join("truth/s0004.krt").exists());
        assert!(dir.path().join("truth/s0007.krt").exists());
    }

    #[test]
    fn rebuild_is_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = build_dataset(&spec(9), a.path()).unwrap();
        let mb = build_dataset(&spec(9), b.path()).unwrap();
        assert_eq!(ma.to_text(), mb.to_text());
    }

    #[test]
    fn tampered_file_fails_audit() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(&spec(4), dir.path()).unwrap();
        let victim = dir.path().join(&m.entries[0].path);
        let mut bytes = std::fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&victim, bytes).unwrap();
        assert!(m.audit(dir.path()).is_err());
        assert!(load_split(dir.path(), Split::Train).is_err());
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(DatasetManifest::parse("a\tb\tc\n").is_err());
        assert!(DatasetManifest::parse("a\tb\tc\tbogus\n").is_err());
        let ok = DatasetManifest::parse("# comment\ns1\ttrain/s1.krt\tab\ttrain\n").unwrap();
        assert_eq!(ok.entries[0].split, Split::Train);
    }

    #[test]
    fn zero_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = DatasetSpec { n_val: 0, ..spec(1) };
        assert!(matches!(build_dataset(&s, dir.path()), Err(Error::Config(_))));
    }
}
