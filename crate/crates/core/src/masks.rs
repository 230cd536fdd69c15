//! Cartesian line masks: the acquisition mask, the self-supervision subset
//! mask and banks of simulated acquisition masks.
//!
//! All masks sample whole phase-encode rows. Generation is a pure function of
//! the spec, so the same spec and seed always give the same mask.

use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{KSpace, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineKind {
    RandomLine,
    EquispacedLine,
}

impl FromStr for LineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-line" => Ok(LineKind::RandomLine),
            "equispaced-line" => Ok(LineKind::EquispacedLine),
            other => Err(Error::Config(format!("unknown mask kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for LineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LineKind::RandomLine => "random-line",
            LineKind::EquispacedLine => "equispaced-line",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSpec {
    pub height: usize,
    pub width: usize,
    /// Undersampling factor R.
    pub acceleration: usize,
    /// Fully sampled central rows.
    pub acs_lines: usize,
    pub kind: LineKind,
    pub seed: u64,
}

impl MaskSpec {
    pub fn kept_rows(&self) -> usize {
        self.height.div_ceil(self.acceleration).max(self.acs_lines)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidInput("mask dimensions must be positive".into()));
        }
        if self.acceleration == 0 {
            return Err(Error::InvalidInput("acceleration must be at least 1".into()));
        }
        if self.acceleration > self.height {
            return Err(Error::InfeasibleSpec(format!(
                "acceleration {} exceeds height {}",
                self.acceleration, self.height
            )));
        }
        if self.acs_lines > self.height {
            return Err(Error::InfeasibleSpec(format!(
                "{} ACS lines exceed height {}",
                self.acs_lines, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSpec {
    pub target_ratio: f64,
    /// Half-width in rows of the central band whose acquired rows are always selected.
    pub low_freq_band: usize,
    pub seed: u64,
}

impl LambdaSpec {
    pub fn new(target_ratio: f64, low_freq_band: usize, seed: u64) -> Self {
        Self {
            target_ratio,
            low_freq_band,
            seed,
        }
    }
}

/// Rows `[H/2 - w/2, H/2 - w/2 + w)` clipped to the grid: a band of `width_rows`
/// rows centered on DC.
pub fn central_band(height: usize, width_rows: usize) -> Range<usize> {
    let start = (height / 2).saturating_sub(width_rows / 2);
    start..(start + width_rows).min(height)
}

pub fn gen_omega(spec: &MaskSpec) -> Result<Mask> {
    spec.validate()?;
    let acs = central_band(spec.height, spec.acs_lines);
    let mut rows: Vec<usize> = acs.clone().collect();
    let candidates: Vec<usize> = (0..spec.height).filter(|r| !acs.contains(r)).collect();
    let extra = spec.kept_rows() - rows.len();

    let mut rng = seed::rng(spec.seed);
    match spec.kind {
        LineKind::RandomLine => {
            rows.extend(index::sample(&mut rng, candidates.len(), extra).into_iter().map(|i| candidates[i]));
        }
        LineKind::EquispacedLine => {
            if extra > 0 {
                let offset: f64 = rng.random_range(0.0..1.0);
                let step = candidates.len() as f64 / extra as f64;
                rows.extend((0..extra).map(|i| candidates[((i as f64 + offset) * step) as usize]));
            }
        }
    }
    Mask::from_rows(spec.height, spec.width, &rows)
}

/// Number of rows selected for a subset mask of an `n_rows` acquisition.
pub fn lambda_row_target(n_rows: usize, target_ratio: f64) -> usize {
    (target_ratio * n_rows as f64).round() as usize
}

/// Draws the self-supervision input mask: every acquired row inside the
/// central band, plus random acquired rows outside it until the row count
/// reaches `round(target_ratio * acquired_rows)`.
pub fn gen_lambda(omega: &Mask, spec: &LambdaSpec) -> Result<Mask> {
    if !(spec.target_ratio > 0.0 && spec.target_ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target ratio {} outside (0, 1)",
            spec.target_ratio
        )));
    }
    let (h, w) = omega.shape();
    if spec.low_freq_band > h / 2 {
        return Err(Error::InvalidInput(format!(
            "low-frequency half-band {} exceeds half height {}",
            spec.low_freq_band,
            h / 2
        )));
    }
    let rows = omega.kept_rows();
    let target = lambda_row_target(rows.len(), spec.target_ratio);
    let band = central_band(h, 2 * spec.low_freq_band);
    let (mandatory, high): (Vec<usize>, Vec<usize>) = rows.iter().partition(|r| band.contains(r));
    if target < mandatory.len() || target == 0 {
        return Err(Error::InfeasibleRatio {
            target,
            mandatory: mandatory.len(),
        });
    }

    let mut rng = seed::rng(spec.seed);
    let picked = index::sample(&mut rng, high.len(), target - mandatory.len());
    let mut selected = vec![false; h];
    for &r in mandatory.iter().chain(picked.iter().map(|i| &high[i])) {
        selected[r] = true;
    }
    let kept = omega
        .kept()
        .iter()
        .enumerate()
        .map(|(i, &k)| k && selected[i / w])
        .collect();
    Mask::new(h, w, kept)
}

/// `count` distinct simulated acquisition masks sharing the acceleration and
/// ACS of `base`. Mask `i` is drawn from seed `seed + j` for the smallest
/// `j` giving a mask not already in the bank, so the first mask is always
/// `gen_omega` at `seed`.
pub fn gen_mask_bank(base: &MaskSpec, count: usize, seed: u64) -> Result<Vec<Mask>> {
    if count == 0 {
        return Err(Error::InvalidInput("mask bank needs at least one mask".into()));
    }
    let mut bank: Vec<Mask> = Vec::with_capacity(count);
    let max_attempts = 64 * count as u64;
    let mut attempt = 0u64;
    while bank.len() < count {
        if attempt >= max_attempts {
            return Err(Error::InfeasibleSpec(format!(
                "could not draw {count} distinct masks (found {})",
                bank.len()
            )));
        }
        let spec = MaskSpec {
            seed: seed.wrapping_add(attempt),
            ..base.clone()
        };
        let mask = gen_omega(&spec)?;
        if !bank.contains(&mask) {
            bank.push(mask);
        }
        attempt += 1;
    }
    Ok(bank)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskStats {
    pub kept_count: usize,
    pub kept_ratio: f64,
    /// `(band width in rows, fraction of the band's points kept)`.
    pub low_freq_coverage: Vec<(usize, f64)>,
}

impl MaskStats {
    pub fn coverage(&self, band_rows: usize) -> Option<f64> {
        self.low_freq_coverage
            .iter()
            .find(|(b, _)| *b == band_rows)
            .map(|&(_, c)| c)
    }
}

pub fn mask_stats(mask: &Mask, band_rows: &[usize]) -> MaskStats {
    let (h, w) = mask.shape();
    let kept_count = mask.kept_count();
    let low_freq_coverage = band_rows
        .iter()
        .map(|&b| {
            let band = central_band(h, b);
            let total = band.len() * w;
            let kept = band
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .filter(|&(r, c)| mask.is_kept(r, c))
                .count();
            let cov = if total == 0 { 1.0 } else { kept as f64 / total as f64 };
            (b, cov)
        })
        .collect();
    MaskStats {
        kept_count,
        kept_ratio: kept_count as f64 / (h * w) as f64,
        low_freq_coverage,
    }
}

/// Fraction of `full`'s energy not carried by `target`:
/// `‖full − target‖² / ‖full‖²`. Measures how far a training target is from
/// fully sampled data.
pub fn coverage_gap(target: &KSpace, full: &KSpace) -> Result<f64> {
    crate::tensor::check_shape(target.shape(), full.shape(), "coverage_gap")?;
    let total = full.norm_sqr();
    if total == 0.0 {
        return Ok(0.0);
    }
    let missing: f64 = target
        .data()
        .iter()
        .zip(full.data())
        .map(|(t, f)| (f - t).norm_sqr())
        .sum();
    Ok(missing / total)
}

/// Plain-text listing: a header line, then one line per kept row. Fully kept
/// rows print as the bare index; partial rows list their kept columns.
pub fn mask_to_text(mask: &Mask) -> String {
    let (h, w) = mask.shape();
    let mut out = format!("# mask {h} {w}\n");
    for r in mask.kept_rows() {
        let cols: Vec<usize> = (0..w).filter(|&c| mask.is_kept(r, c)).collect();
        if cols.len() == w {
            let _ = writeln!(out, "{r}");
        } else {
            let list: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{r}: {}", list.join(" "));
        }
    }
    out
}

pub fn mask_from_text(text: &str) -> Result<Mask> {
    let bad = |line: usize, msg: &str| Error::Format {
        offset: line as u64,
        msg: format!("line {}: {msg}", line + 1),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(0, "empty mask listing"))?;
    let dims: Vec<usize> = header
        .strip_prefix("# mask ")
        .ok_or_else(|| bad(0, "missing `# mask H W` header"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(0, "bad dimension")))
        .collect::<Result<_>>()?;
    let [h, w] = dims[..] else {
        return Err(bad(0, "expected two dimensions"));
    };
    let mut kept = vec![false; h * w];
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse = |t: &str, limit: usize| -> Result<usize> {
            let v: usize = t.trim().parse().map_err(|_| bad(ln, "bad index"))?;
            if v >= limit {
                return Err(bad(ln, "index out of range"));
            }
            Ok(v)
        };
        match line.split_once(':') {
            None => {
                let r = parse(line, h)?;
                kept[r * w..(r + 1) * w].fill(true);
            }
            Some((row, cols)) => {
                let r = parse(row, h)?;
                for c in cols.split_whitespace() {
                    kept[r * w + parse(c, w)?] = true;
                }
            }
        }
    }
    Mask::new(h, w, kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(height: usize, acceleration: usize, acs_lines: usize, seed: u64) -> MaskSpec {
        MaskSpec {
            height,
            width: 8,
            acceleration,
            acs_lines,
            kind: LineKind::RandomLine,
            seed,
        }
    }

    #[test]
    fn omega_row_counts() {
        let m = gen_omega(&spec(256, 4, 16, 1)).unwrap();
        let rows = m.kept_rows();
        assert_eq!(rows.len(), 64);
        for r in 120..136 {
            assert!(rows.contains(&r));
        }
        assert_eq!(gen_omega(&spec(256, 8, 16, 1)).unwrap().kept_rows().len(), 32);
        // ACS wider than the acceleration budget wins.
        assert_eq!(gen_omega(&spec(32, 8, 10, 1)).unwrap().kept_rows().len(), 10);
    }

    #[test]
    fn omega_is_deterministic() {
        assert_eq!(gen_omega(&spec(64, 4, 8, 3)).unwrap(), gen_omega(&spec(64, 4, 8, 3)).unwrap());
        assert_ne!(gen_omega(&spec(64, 4, 8, 3)).unwrap(), gen_omega(&spec(64, 4, 8, 4)).unwrap());
    }

    #[test]
    fn equispaced_rows_are_evenly_spread() {
        let s = MaskSpec { kind: LineKind::EquispacedLine, ..spec(64, 4, 0, 9) };
        let rows = gen_omega(&s).unwrap().kept_rows();
        assert_eq!(rows.len(), 16);
        for pair in rows.windows(2) {
            let gap = pair[1] - pair[0];
            assert!((3..=5).contains(&gap), "{rows:?}");
        }
    }

    #[test]
    fn infeasible_specs() {
        assert!(matches!(gen_omega(&spec(8, 9, 0, 0)), Err(Error::InfeasibleSpec(_))));
        assert!(matches!(gen_omega(&spec(8, 2, 9, 0)), Err(Error::InfeasibleSpec(_))));
        assert!(matches!(gen_omega(&spec(8, 0, 0, 0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lambda_half_of_sixty_four() {
        let omega = gen_omega(&spec(256, 4, 16, 5)).unwrap();
        let lambda = gen_lambda(&omega, &LambdaSpec::new(0.5, 8, 11)).unwrap();
        let rows = lambda.kept_rows();
        assert_eq!(rows.len(), 32);
        for r in 120..136 {
            assert!(rows.contains(&r));
        }
        assert_eq!(rows.iter().filter(|r| !(120..136).contains(*r)).count(), 16);
        assert!(lambda.is_subset_of(&omega));

        let other = gen_lambda(&omega, &LambdaSpec::new(0.5, 8, 12)).unwrap();
        assert_ne!(lambda, other);
        assert!(other.is_subset_of(&omega));

        let stats = mask_stats(&lambda, &[16]);
        assert_eq!(stats.kept_count, 32 * 8);
        assert_eq!(stats.coverage(16), Some(1.0));
    }

    #[test]
    fn lambda_on_full_sampling() {
        // H=8, full sampling, band half-width 2: rows 2..6 mandatory, target 4.
        let omega = Mask::full(8, 3);
        let lambda = gen_lambda(&omega, &LambdaSpec::new(0.5, 2, 0)).unwrap();
        assert_eq!(lambda.kept_rows(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn lambda_infeasible_ratio() {
        let omega = Mask::full(8, 3);
        let err = gen_lambda(&omega, &LambdaSpec::new(0.25, 3, 0)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRatio { target: 2, mandatory: 6 }));
        assert!(gen_lambda(&omega, &LambdaSpec::new(1.0, 0, 0)).is_err());
        assert!(gen_lambda(&omega, &LambdaSpec::new(0.5, 5, 0)).is_err());
    }

    #[test]
    fn lambda_keeps_partial_rows_as_subset() {
        let mut kept = vec![false; 16];
        for c in [0, 2] {
            kept[4 + c] = true; // row 1
            kept[12 + c] = true; // row 3
        }
        kept[8] = true; // row 2
        let omega = Mask::new(4, 4, kept).unwrap();
        let lambda = gen_lambda(&omega, &LambdaSpec::new(0.5, 0, 4)).unwrap();
        assert!(lambda.is_subset_of(&omega));
        assert_eq!(lambda.kept_rows().len(), 2);
    }

    #[test]
    fn bank_properties() {
        let base = spec(256, 4, 16, 0);
        let bank = gen_mask_bank(&base, 4, 77).unwrap();
        assert_eq!(bank.len(), 4);
        for (i, m) in bank.iter().enumerate() {
            assert_eq!(m.kept_rows().len(), 64);
            for other in &bank[i + 1..] {
                assert_ne!(m.kept_rows(), other.kept_rows());
            }
        }
        assert_eq!(bank, gen_mask_bank(&base, 4, 77).unwrap());
        let single = gen_mask_bank(&base, 1, 77).unwrap();
        assert_eq!(single, vec![gen_omega(&MaskSpec { seed: 77, ..base.clone() }).unwrap()]);
        assert!(gen_mask_bank(&base, 0, 1).is_err());
    }

    #[test]
    fn bank_of_impossible_distinct_masks_fails() {
        let base = spec(8, 1, 0, 0);
        assert!(matches!(gen_mask_bank(&base, 2, 0), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn stats_of_standard_masks() {
        let full = mask_stats(&Mask::full(16, 16), &[4]);
        assert_eq!(full.kept_ratio, 1.0);
        assert_eq!(full.coverage(4), Some(1.0));
        let r4 = mask_stats(&gen_omega(&spec(256, 4, 16, 2)).unwrap(), &[16]);
        assert_eq!(r4.kept_ratio, 0.25);
        assert_eq!(r4.coverage(16), Some(1.0));
        assert_eq!(r4.coverage(3), None);
    }

    #[test]
    fn text_listing_round_trip() {
        let m = gen_omega(&spec(32, 4, 4, 8)).unwrap();
        let text = mask_to_text(&m);
        assert!(text.starts_with("# mask 32 8\n"));
        assert_eq!(mask_from_text(&text).unwrap(), m);

        let partial = Mask::new(2, 3, vec![false, true, true, false, false, false]).unwrap();
        assert_eq!(mask_to_text(&partial), "# mask 2 3\n0: 1 2\n");
        assert_eq!(mask_from_text(&mask_to_text(&partial)).unwrap(), partial);
        assert!(mask_from_text("# mask 2 3\n5\n").is_err());
    }

    #[test]
    fn coverage_gap_bounds() {
        let full = KSpace::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let half = KSpace::from_real(2, 2, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(coverage_gap(&full, &full).unwrap(), 0.0);
        assert_eq!(coverage_gap(&half, &full).unwrap(), 0.5);
    }
}
