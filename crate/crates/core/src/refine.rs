//! Stage-by-stage training with iterative refinement of the training data.
//!
//! Stage 0 trains on the acquired data. Every later stage first passes each
//! subject's acquired k-space through the previous stage's best model,
//! restores the acquired samples, and trains on the result restricted to a
//! simulated acquisition mask joined with the original one.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masks::{gen_mask_bank, LineKind, MaskSpec};
use crate::recon::{Reconstructor, UnrolledIsta, UnrolledParams};
use crate::seed::{self, tag};
use crate::tensor::{data_consistency, fft2c, Mask};
use crate::train::{train_stage, StageReport, TrainConfig, TrainSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMaskMode {
    /// Refined sample mask is `Ω̃ ∪ Ω`; acquired points always survive.
    UnionWithAcquired,
    /// Refined sample mask is `Ω̃` alone (ablation; drops acquired points outside Ω̃).
    SimulatedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalSelection {
    /// Best validation loss over all stages.
    BestValidation,
    /// Best checkpoint of the last stage.
    LastStage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub num_stages: usize,
    pub mask_bank_size: usize,
    /// Acceleration, ACS and line kind of the simulated masks. Height,
    /// width and seed are taken from the data and the master seed.
    pub bank_acceleration: usize,
    pub bank_acs_lines: usize,
    pub bank_kind: LineKind,
    pub keep_acquired: bool,
    pub mask_mode: RefineMaskMode,
    pub warm_start: bool,
    pub final_selection: FinalSelection,
    pub train: TrainConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            num_stages: 15,
            mask_bank_size: 4,
            bank_acceleration: 4,
            bank_acs_lines: 16,
            bank_kind: LineKind::RandomLine,
            keep_acquired: true,
            mask_mode: RefineMaskMode::UnionWithAcquired,
            warm_start: true,
            final_selection: FinalSelection::BestValidation,
            train: TrainConfig::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 {
            return Err(Error::Config("num_stages must be at least 1".into()));
        }
        if self.mask_bank_size == 0 {
            return Err(Error::Config("mask_bank_size must be at least 1".into()));
        }
        if self.keep_acquired && self.mask_mode == RefineMaskMode::SimulatedOnly {
            return Err(Error::Config("simulated-only masks cannot keep acquired data".into()));
        }
        self.train.validate()
    }

    pub fn bank(&self, height: usize, width: usize) -> Result<Vec<Mask>> {
        let base = MaskSpec {
            height,
            width,
            acceleration: self.bank_acceleration,
            acs_lines: self.bank_acs_lines,
            kind: self.bank_kind,
            seed: 0,
        };
        gen_mask_bank(&base, self.mask_bank_size, seed::derive(self.train.master_seed, &[tag::BANK]))
    }
}

#[derive(Clone)]
pub struct RefineState {
    /// Number of completed stages.
    pub stage_index: usize,
    pub current_dataset: Vec<TrainSample>,
    pub best_params_per_stage: Vec<UnrolledParams>,
    pub reports: Vec<StageReport>,
}

impl std::fmt::Debug for RefineState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RefineState")
            .field("stage_index", &self.stage_index)
            .field("samples", &self.current_dataset.len())
            .field("best_params_per_stage", &self.best_params_per_stage)
            .finish_non_exhaustive()
    }
}

impl RefineState {
    pub fn best_stage(&self) -> Option<usize> {
        self.reports
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.best_val_loss.total_cmp(&b.1.best_val_loss))
            .map(|(i, _)| i)
    }

    /// Index of the stage whose parameters `selection` picks.
    pub fn selected_stage(&self, selection: FinalSelection) -> Option<usize> {
        match selection {
            FinalSelection::BestValidation => self.best_stage(),
            FinalSelection::LastStage => self.reports.len().checked_sub(1),
        }
    }
}

/// Passed to the observer after each stage finishes training.
pub struct StageOutput<'a> {
    pub stage: usize,
    pub params: &'a UnrolledParams,
    pub report: &'a StageReport,
    /// The dataset this stage trained on.
    pub dataset: &'a [TrainSample],
}

#[derive(Debug)]
pub struct RefineFailure {
    pub state: RefineState,
    pub error: Error,
}

impl std::fmt::Display for RefineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "refinement stopped after {} stage(s): {}", self.state.stage_index, self.error)
    }
}

impl std::error::Error for RefineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `model` on each subject's acquired data, restores the acquired
/// samples and restricts the result to the subject's stage mask. Sample `i`
/// gets `bank[(i + stage) % bank.len()]`.
pub fn refine_dataset(
    model: &dyn Reconstructor,
    original: &[TrainSample],
    stage: usize,
    bank: &[Mask],
    mode: RefineMaskMode,
) -> Result<Vec<TrainSample>> {
    if bank.is_empty() {
        return Err(Error::InvalidInput("mask bank is empty".into()));
    }
    original
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let wrap = |e: Error| Error::Stage { stage, subject: s.subject_id.clone(), source: Box::new(e) };
            let x = model.reconstruct(&s.target_k, &s.omega).map_err(wrap)?;
            let k = fft2c(&x).map_err(wrap)?;
            let k = data_consistency(&k, &s.target_k, &s.omega).map_err(wrap)?;
            let simulated = &bank[(i + stage) % bank.len()];
            let mask = match mode {
                RefineMaskMode::UnionWithAcquired => simulated.union(&s.omega).map_err(wrap)?,
                RefineMaskMode::SimulatedOnly => simulated.clone(),
            };
            let k = mask.masked(&k).map_err(wrap)?;
            TrainSample::new(k, mask, s.subject_id.clone()).map_err(wrap)
        })
        .collect()
}

/// Verifies that every refined sample equals its original bit-for-bit on the
/// original acquisition mask.
pub fn check_acquired_preserved(original: &[TrainSample], refined: &[TrainSample]) -> Result<()> {
    if original.len() != refined.len() {
        return Err(Error::InvalidInput(format!(
            "{} original vs {} refined samples",
            original.len(),
            refined.len()
        )));
    }
    for (o, r) in original.iter().zip(refined) {
        let same = o
            .omega
            .kept()
            .iter()
            .zip(o.target_k.data().iter().zip(r.target_k.data()))
            .filter(|(&k, _)| k)
            .all(|(_, (a, b))| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
        if !same || r.subject_id != o.subject_id {
            return Err(Error::AcquiredDataModified(o.subject_id.clone()));
        }
    }
    Ok(())
}

/// Hex SHA-256 over the acquired samples (kept points of `omega`, row-major,
/// little-endian re/im). Equal digests before and after refinement show the
/// acquired data survived unchanged.
pub fn acquired_digest(sample: &TrainSample, omega: &Mask) -> String {
    let mut bytes = Vec::with_capacity(16 * omega.kept_count());
    for (v, &k) in sample.target_k.data().iter().zip(omega.kept()) {
        if k {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    crate::data::io::sha256_hex(&bytes)
}

pub fn run_refinement(
    original: &[TrainSample],
    cfg: &RefineConfig,
    val_set: &[TrainSample],
) -> std::result::Result<(UnrolledParams, RefineState), RefineFailure> {
    run_refinement_with(original, cfg, val_set, |_| Ok(()))
}

pub fn run_refinement_with<F>(
    original: &[TrainSample],
    cfg: &RefineConfig,
    val_set: &[TrainSample],
    mut observer: F,
) -> std::result::Result<(UnrolledParams, RefineState), RefineFailure>
where
    F: FnMut(&StageOutput<'_>) -> Result<()>,
{
    let mut state = RefineState {
        stage_index: 0,
        current_dataset: original.to_vec(),
        best_params_per_stage: Vec::new(),
        reports: Vec::new(),
    };
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(RefineFailure { state, error }),
            }
        };
    }

    bail!(cfg.validate());
    let Some(first) = original.first() else {
        bail!(Err(Error::InvalidInput("training dataset is empty".into())))
    };
    let initial = bail!(cfg.train.initial_params());
    let bank = if cfg.num_stages > 1 {
        bail!(cfg.bank(first.target_k.height(), first.target_k.width()))
    } else {
        Vec::new()
    };

    for stage in 0..cfg.num_stages {
        let start = match state.best_params_per_stage.last() {
            Some(prev) => {
                let model = UnrolledIsta { params: prev.clone(), transform: cfg.train.transform };
                let refined = bail!(refine_dataset(&model, original, stage, &bank, cfg.mask_mode));
                if cfg.keep_acquired {
                    bail!(check_acquired_preserved(original, &refined));
                }
                state.current_dataset = refined;
                if cfg.warm_start { prev.clone() } else { initial.clone() }
            }
            None => initial.clone(),
        };
        let (best, report) = bail!(train_stage(&state.current_dataset, &start, &cfg.train, stage, val_set));
        bail!(observer(&StageOutput { stage, params: &best, report: &report, dataset: &state.current_dataset }));
        state.best_params_per_stage.push(best);
        state.reports.push(report);
        state.stage_index = stage + 1;
    }

    let chosen = state.selected_stage(cfg.final_selection).expect("at least one stage ran");
    let params = state.best_params_per_stage[chosen].clone();
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::phantom::{gen_phantom, simulate_acquisition, PhantomKind, PhantomSpec};
    use crate::masks::{coverage_gap, gen_omega};
    use crate::recon::{Transform, ZeroFilled};
    use crate::tensor::{ComplexImage, KSpace};

    fn phantom(i: u64, n: usize) -> ComplexImage {
        gen_phantom(&PhantomSpec {
            height: n,
            width: n,
            kind: PhantomKind::RandomEllipses { count: 3 },
            noise_sigma: 0.0,
            seed: i,
        })
        .unwrap()
    }

    fn omega(n: usize) -> Mask {
        gen_omega(&MaskSpec { height: n, width: n, acceleration: 4, acs_lines: 2, kind: LineKind::RandomLine, seed: 1 })
            .unwrap()
    }

    /// Test-only model that ignores its input and returns stored truth.
    struct Oracle(Vec<(String, ComplexImage)>);

    impl Reconstructor for Oracle {
        fn reconstruct(&self, y: &KSpace, _omega: &Mask) -> Result<ComplexImage> {
            self.0
                .iter()
                .find(|(_, img)| img.shape() == y.shape() && fft_matches(img, y))
                .map(|(_, img)| img.clone())
                .ok_or_else(|| Error::Internal("unknown subject".into()))
        }

        fn name(&self) -> &str {
            "oracle"
        }
    }

    fn fft_matches(img: &ComplexImage, y: &KSpace) -> bool {
        let k = fft2c(img).unwrap();
        k.data().iter().zip(y.data()).filter(|(_, b)| b.norm() > 0.0).all(|(a, b)| (a - b).norm() < 1e-9)
    }

    fn small_cfg(stages: usize) -> RefineConfig {
        RefineConfig {
            num_stages: stages,
            mask_bank_size: 2,
            bank_acceleration: 4,
            bank_acs_lines: 2,
            train: TrainConfig {
                epochs_per_stage: 2,
                num_phases: 2,
                lambda_band: 1,
                lr: 0.01,
                transform: Transform::Haar { levels: 1 },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn samples(n: usize, count: u64, offset: u64) -> (Vec<TrainSample>, Vec<ComplexImage>) {
        let om = omega(n);
        (0..count)
            .map(|i| {
                let img = phantom(i + offset, n);
                (simulate_acquisition(&img, &om, 0.0, 0, &format!("s{}", i + offset)).unwrap(), img)
            })
            .unzip()
    }

    #[test]
    fn identity_model_on_full_mask_is_bit_exact() {
        let img = phantom(1, 8);
        let s = simulate_acquisition(&img, &Mask::full(8, 8), 0.0, 0, "a").unwrap();
        let bank = vec![Mask::full(8, 8)];
        let out = refine_dataset(&ZeroFilled, std::slice::from_ref(&s), 1, &bank, RefineMaskMode::UnionWithAcquired).unwrap();
        assert_eq!(out[0], s);
    }

    #[test]
    fn refined_data_keeps_acquired_points() {
        let (orig, _) = samples(16, 3, 0);
        let cfg = small_cfg(2);
        let bank = cfg.bank(16, 16).unwrap();
        let model = UnrolledIsta { params: UnrolledParams::uniform(2, 1.0, 0.05).unwrap(), transform: Transform::Haar { levels: 1 } };
        let refined = refine_dataset(&model, &orig, 1, &bank, RefineMaskMode::UnionWithAcquired).unwrap();
        check_acquired_preserved(&orig, &refined).unwrap();
        for (i, (o, r)) in orig.iter().zip(&refined).enumerate() {
            assert!(o.omega.is_subset_of(&r.omega));
            assert_eq!(r.omega, bank[(i + 1) % 2].union(&o.omega).unwrap());
            assert_eq!(acquired_digest(o, &o.omega), acquired_digest(r, &o.omega));
        }
    }

    #[test]
    fn tampering_is_detected() {
        let (orig, _) = samples(16, 1, 0);
        let mut bad = orig.clone();
        let idx = bad[0].omega.kept().iter().position(|&k| k).unwrap();
        bad[0].target_k.data_mut()[idx].re += 1e-12;
        assert!(matches!(check_acquired_preserved(&orig, &bad), Err(Error::AcquiredDataModified(_))));
    }

    #[test]
    fn oracle_refinement_shrinks_coverage_gap() {
        let (orig, truth) = samples(16, 3, 0);
        let oracle = Oracle(orig.iter().map(|s| s.subject_id.clone()).zip(truth.iter().cloned()).collect());
        let bank = small_cfg(2).bank(16, 16).unwrap();
        let refined = refine_dataset(&oracle, &orig, 1, &bank, RefineMaskMode::UnionWithAcquired).unwrap();
        for ((o, r), img) in orig.iter().zip(&refined).zip(&truth) {
            let full = fft2c(img).unwrap();
            for i in 0..full.len() {
                if r.omega.kept()[i] {
                    assert!((r.target_k.data()[i] - full.data()[i]).norm() < 1e-6);
                }
            }
            let before = coverage_gap(&o.target_k, &full).unwrap();
            let after = coverage_gap(&r.target_k, &full).unwrap();
            assert!(after <= before);
            if r.omega.kept_count() > o.omega.kept_count() {
                assert!(after < before);
            }
        }
    }

    #[test]
    fn model_failure_names_subject() {
        struct Broken;
        impl Reconstructor for Broken {
            fn reconstruct(&self, _: &KSpace, _: &Mask) -> Result<ComplexImage> {
                Err(Error::Numeric("boom".into()))
            }
            fn name(&self) -> &str {
                "broken"
            }
        }
        let (orig, _) = samples(16, 2, 0);
        let err = refine_dataset(&Broken, &orig, 3, &[omega(16)], RefineMaskMode::UnionWithAcquired).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: 3, .. }));
        assert!(err.to_string().contains("s0"));
    }

    #[test]
    fn single_stage_equals_plain_training() {
        let (orig, _) = samples(16, 4, 0);
        let (val, _) = samples(16, 2, 100);
        let cfg = small_cfg(1);
        let (params, state) = run_refinement(&orig, &cfg, &val).unwrap();
        let (plain, report) = train_stage(&orig, &cfg.train.initial_params().unwrap(), &cfg.train, 0, &val).unwrap();
        assert_eq!(params, plain);
        assert_eq!(state.reports, vec![report]);
        assert_eq!(state.stage_index, 1);
    }

    #[test]
    fn multi_stage_is_deterministic() {
        let (orig, _) = samples(16, 4, 0);
        let (val, _) = samples(16, 2, 100);
        let cfg = small_cfg(3);
        let mut seen = Vec::new();
        let (a, sa) = run_refinement_with(&orig, &cfg, &val, |out| {
            seen.push(out.stage);
            if out.stage > 0 {
                check_acquired_preserved(&orig, out.dataset)?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
        let (b, sb) = run_refinement(&orig, &cfg, &val).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa.reports, sb.reports);
        assert_eq!(sa.stage_index, 3);
    }

    #[test]
    fn observer_failure_returns_partial_state() {
        let (orig, _) = samples(16, 2, 0);
        let (val, _) = samples(16, 1, 100);
        let cfg = small_cfg(3);
        let failure = run_refinement_with(&orig, &cfg, &val, |out| {
            if out.stage == 1 {
                Err(Error::Internal("stop".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert_eq!(failure.state.stage_index, 1);
        assert_eq!(failure.state.reports.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(RefineConfig { num_stages: 0, ..small_cfg(1) }.validate().is_err());
        let bad = RefineConfig { mask_mode: RefineMaskMode::SimulatedOnly, ..small_cfg(2) };
        assert!(bad.validate().is_err());
        let ok = RefineConfig { keep_acquired: false, ..bad };
        assert!(ok.validate().is_ok());
    }
}
