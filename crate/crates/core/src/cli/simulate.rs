use super::RunConfig;
use crate::data::dataset::{build_dataset, Split, MANIFEST_FILE};
use crate::data::io::sha256_hex;
use crate::error::Result;

pub(super) fn run(cfg: &RunConfig) -> Result<()> {
    let manifest = build_dataset(&cfg.dataset_spec(), &cfg.dataset_dir)?;
    let count = |s| manifest.split(s).count();
    println!("dataset      {}", cfg.dataset_dir.display());
    println!("subjects     train {} / val {} / test {}", count(Split::Train), count(Split::Val), count(Split::Test));
    println!(
        "acquisition  {}x{}  R={}  acs={}  {}",
        cfg.height, cfg.width, cfg.acceleration, cfg.acs_lines, cfg.mask_kind
    );
    println!("{MANIFEST_FILE}  sha256 {}", sha256_hex(manifest.to_text().as_bytes()));
    Ok(())
}
