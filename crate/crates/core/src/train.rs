//! Self-supervised training of the unrolled reconstructor.
//!
//! Each sample's acquired k-space is split: the rows selected by a subset
//! mask Λ feed the network, and the loss compares the network's k-space
//! against all acquired points, plus a weighted consistency term on Λ.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::masks::{gen_lambda, LambdaSpec};
use crate::recon::{unrolled_backward, unrolled_forward, ParamGrad, Transform, UnrolledParams};
use crate::seed::{self, tag};
use crate::tensor::{check_shape, fft2c_unchecked, ifft2c_unchecked, KSpace, Mask};

/// Validation losses must drop by more than this to count as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-7;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Acquired (or refined) k-space together with the mask it is supported on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub target_k: KSpace,
    pub omega: Mask,
    pub subject_id: String,
}

impl TrainSample {
    /// Rejects samples carrying energy outside `omega`.
    pub fn new(target_k: KSpace, omega: Mask, subject_id: impl Into<String>) -> Result<Self> {
        let subject_id = subject_id.into();
        check_shape(target_k.shape(), omega.shape(), "train sample")?;
        let zero = Complex64::new(0.0, 0.0);
        if target_k.data().iter().zip(omega.kept()).any(|(v, &k)| !k && *v != zero) {
            return Err(Error::InvalidInput(format!(
                "sample {subject_id} has nonzero k-space outside its mask"
            )));
        }
        Ok(Self { target_k, omega, subject_id })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaMode {
    /// New Λ per sample every epoch.
    Resample,
    /// One Λ per sample for the whole run.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the consistency term.
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_per_stage: usize,
    pub patience_epochs: usize,
    pub lr_reduce_factor: f64,
    pub lr_plateau_patience: usize,
    pub master_seed: u64,
    pub lambda_ratio: f64,
    /// Half-width in rows of the band Λ always keeps.
    pub lambda_band: usize,
    pub lambda_mode: LambdaMode,
    pub num_phases: usize,
    pub init_rho: f64,
    pub init_theta: f64,
    pub transform: Transform,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            lr: 0.001,
            batch_size: 4,
            epochs_per_stage: 20,
            patience_epochs: 10,
            lr_reduce_factor: 0.5,
            lr_plateau_patience: 5,
            master_seed: 0,
            lambda_ratio: 0.5,
            lambda_band: 8,
            lambda_mode: LambdaMode::Resample,
            num_phases: 9,
            init_rho: 1.0,
            init_theta: 0.01,
            transform: Transform::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be > 0", self.lr));
        }
        if !(self.lr_reduce_factor > 0.0 && self.lr_reduce_factor < 1.0) {
            return bad(format!("lr_reduce_factor {} outside (0, 1)", self.lr_reduce_factor));
        }
        if self.batch_size == 0 || self.epochs_per_stage == 0 || self.patience_epochs == 0 {
            return bad("batch_size, epochs_per_stage and patience_epochs must be positive".into());
        }
        if self.lr_plateau_patience == 0 || self.num_phases == 0 {
            return bad("lr_plateau_patience and num_phases must be positive".into());
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return bad(format!("lambda_ratio {} outside (0, 1)", self.lambda_ratio));
        }
        Ok(())
    }

    pub fn initial_params(&self) -> Result<UnrolledParams> {
        UnrolledParams::uniform(self.num_phases, self.init_rho, self.init_theta)
    }

    fn lambda_spec(&self, seed: u64) -> LambdaSpec {
        LambdaSpec::new(self.lambda_ratio, self.lambda_band, seed)
    }
}

/// Loss value with what is needed to backpropagate it.
pub struct LossEval {
    pub loss: f64,
    pub main: f64,
    pub consistency: f64,
    tape: crate::recon::ForwardTape,
    output_grad: crate::tensor::ComplexImage,
}

impl LossEval {
    pub fn param_grad(&self, params: &UnrolledParams) -> Result<ParamGrad> {
        unrolled_backward(&self.tape, params, &self.output_grad)
    }
}

/// Mean of `|k̂ − t|²` over the kept points of `mask`, with its gradient
/// (scaled by `weight`) accumulated into `grad`.
fn masked_mse(k_hat: &KSpace, target: &KSpace, mask: &Mask, weight: f64, grad: &mut [Complex64]) -> f64 {
    let n = mask.kept_count() as f64;
    let mut total = 0.0;
    for (i, &kept) in mask.kept().iter().enumerate() {
        if kept {
            let d = k_hat.data()[i] - target.data()[i];
            total += d.norm_sqr();
            grad[i] += d * (2.0 * weight / n);
        }
    }
    total / n
}

/// `MSE_Ω(ỹ, F f(Λ∘ỹ)) + γ · MSE_Λ(Λ∘ỹ, F f(Λ∘ỹ))`.
pub fn selfsup_loss(
    sample: &TrainSample,
    lambda_mask: &Mask,
    params: &UnrolledParams,
    cfg: &TrainConfig,
) -> Result<LossEval> {
    if !lambda_mask.is_subset_of(&sample.omega) {
        return Err(Error::MaskViolation);
    }
    let input = lambda_mask.masked(&sample.target_k)?;
    let (x, tape) = unrolled_forward(&input, lambda_mask, params, cfg.transform)?;
    let k_hat = fft2c_unchecked(&x);
    let (h, w) = k_hat.shape();
    let mut k_grad = vec![Complex64::new(0.0, 0.0); h * w];
    let main = masked_mse(&k_hat, &sample.target_k, &sample.omega, 1.0, &mut k_grad);
    let consistency = masked_mse(&k_hat, &sample.target_k, lambda_mask, cfg.gamma, &mut k_grad);
    let loss = main + cfg.gamma * consistency;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss for {}", sample.subject_id)));
    }
    let output_grad = ifft2c_unchecked(&KSpace::from_raw(h, w, k_grad));
    Ok(LossEval { loss, main, consistency, tape, output_grad })
}

/// Supervised counterpart: the network sees all acquired data and is scored
/// against fully sampled k-space over the whole grid.
pub fn supervised_loss(
    sample: &TrainSample,
    full_k: &KSpace,
    params: &UnrolledParams,
    cfg: &TrainConfig,
) -> Result<LossEval> {
    check_shape(sample.target_k.shape(), full_k.shape(), "supervised_loss")?;
    let (x, tape) = unrolled_forward(&sample.target_k, &sample.omega, params, cfg.transform)?;
    let k_hat = fft2c_unchecked(&x);
    let (h, w) = k_hat.shape();
    let mut k_grad = vec![Complex64::new(0.0, 0.0); h * w];
    let main = masked_mse(&k_hat, full_k, &Mask::full(h, w), 1.0, &mut k_grad);
    if !main.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss for {}", sample.subject_id)));
    }
    let output_grad = ifft2c_unchecked(&KSpace::from_raw(h, w, k_grad));
    Ok(LossEval { loss: main, main, consistency: 0.0, tape, output_grad })
}

/// Anything `train_stage` can fit: yields a loss and parameter gradient for
/// the given Λ seed.
pub trait TrainingExample: Sync {
    fn subject_id(&self) -> &str;
    fn evaluate(&self, params: &UnrolledParams, cfg: &TrainConfig, lambda_seed: u64) -> Result<LossEval>;
}

impl TrainingExample for TrainSample {
    fn subject_id(&self) -> &str {
        &self.subject_id
    }

    fn evaluate(&self, params: &UnrolledParams, cfg: &TrainConfig, lambda_seed: u64) -> Result<LossEval> {
        let lambda = gen_lambda(&self.omega, &cfg.lambda_spec(lambda_seed))?;
        selfsup_loss(self, &lambda, params, cfg)
    }
}

/// A sample paired with its fully sampled k-space, for supervised reference
/// training in experiments. Never produced by the data loaders.
pub struct SupervisedSample {
    pub input: TrainSample,
    pub full_k: KSpace,
}

impl TrainingExample for SupervisedSample {
    fn subject_id(&self) -> &str {
        &self.input.subject_id
    }

    fn evaluate(&self, params: &UnrolledParams, cfg: &TrainConfig, _lambda_seed: u64) -> Result<LossEval> {
        supervised_loss(&self.input, &self.full_k, params, cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_phases: usize) -> Self {
        Self { m: vec![0.0; 2 * num_phases], v: vec![0.0; 2 * num_phases], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected Adam update. Thresholds are projected back onto
/// `theta >= 0` after the step.
pub fn adam_step(params: &mut UnrolledParams, grad: &ParamGrad, state: &mut AdamState, lr: f64) -> Result<()> {
    let k = params.len();
    if grad.d_rho.len() != k || grad.d_theta.len() != k || state.m.len() != 2 * k {
        return Err(Error::Dimension(format!("adam: {k} phases vs gradient/state of other size")));
    }
    for (i, (dr, dt)) in grad.d_rho.iter().zip(&grad.d_theta).enumerate() {
        if !dr.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for rho[{i}]")));
        }
        if !dt.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for theta[{i}]")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (p, phase) in params.phases.iter_mut().enumerate() {
        for (slot, g, value) in [(2 * p, grad.d_rho[p], &mut phase.rho), (2 * p + 1, grad.d_theta[p], &mut phase.theta)] {
            state.m[slot] = ADAM_BETA1 * state.m[slot] + (1.0 - ADAM_BETA1) * g;
            state.v[slot] = ADAM_BETA2 * state.v[slot] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = state.m[slot] / bc1;
            let v_hat = state.v[slot] / bc2;
            *value -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        phase.theta = phase.theta.max(0.0);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl StageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.train_loss, e.val_loss, e.lr));
        }
        out
    }

    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "stage {} epoch {} train_loss {:e} val_loss {:e} lr {:e}\n",
                self.stage, e.epoch, e.train_loss, e.val_loss, e.lr
            ));
        }
        out.push_str(&format!(
            "stage {} best_epoch {} best_val_loss {:e} stopped_early {}\n",
            self.stage, self.best_epoch, self.best_val_loss, self.stopped_early
        ));
        out
    }
}

fn lambda_seed(cfg: &TrainConfig, stage: usize, epoch: usize, index: usize) -> u64 {
    match cfg.lambda_mode {
        LambdaMode::Resample => seed::derive(cfg.master_seed, &[tag::LAMBDA, stage as u64, epoch as u64, index as u64]),
        LambdaMode::Fixed => seed::derive(cfg.master_seed, &[tag::LAMBDA, index as u64]),
    }
}

/// Mean self-supervised loss over `val_set` with one fixed Λ per sample.
pub fn validation_loss(val_set: &[TrainSample], params: &UnrolledParams, cfg: &TrainConfig) -> Result<f64> {
    if val_set.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    let losses: Vec<f64> = val_set
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = seed::derive(cfg.master_seed, &[tag::VALIDATION, i as u64]);
            s.evaluate(params, cfg, seed).map(|e| e.loss)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn train_stage(
    dataset: &[TrainSample],
    params: &UnrolledParams,
    cfg: &TrainConfig,
    stage: usize,
    val_set: &[TrainSample],
) -> Result<(UnrolledParams, StageReport)> {
    train_stage_with(dataset, params, cfg, stage, |p| validation_loss(val_set, p, cfg))
}

/// The epoch loop with a caller-supplied validation metric (lower is better).
///
/// Per-sample gradients within a batch may be computed in parallel; they are
/// summed in dataset order so results do not depend on scheduling.
pub fn train_stage_with<E, V>(
    dataset: &[E],
    params: &UnrolledParams,
    cfg: &TrainConfig,
    stage: usize,
    mut validate: V,
) -> Result<(UnrolledParams, StageReport)>
where
    E: TrainingExample,
    V: FnMut(&UnrolledParams) -> Result<f64>,
{
    cfg.validate()?;
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }

    let mut current = params.clone();
    let mut adam = AdamState::new(current.len());
    let mut lr = cfg.lr;
    let mut best_params = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::INFINITY;
    let mut since_improvement = 0;
    let mut since_lr_change = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs_per_stage {
        let with_epoch = |e: Error| match e {
            Error::Numeric(msg) => Error::Numeric(format!("stage {stage} epoch {epoch}: {msg}")),
            Error::NumericOverflow { phase } => {
                Error::Numeric(format!("stage {stage} epoch {epoch}: non-finite value in phase {phase}"))
            }
            other => other,
        };

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(cfg.master_seed, &[tag::SHUFFLE, stage as u64, epoch as u64])));

        let mut train_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let evals: Vec<(f64, ParamGrad)> = batch
                .par_iter()
                .map(|&i| {
                    let seed = lambda_seed(cfg, stage, epoch, i);
                    let eval = dataset[i].evaluate(&current, cfg, seed)?;
                    Ok((eval.loss, eval.param_grad(&current)?))
                })
                .collect::<Result<_>>()
                .map_err(with_epoch)?;
            let mut grad = ParamGrad::zeros(current.len());
            for (loss, g) in &evals {
                train_total += loss;
                grad.add_scaled(g, 1.0 / batch.len() as f64);
            }
            adam_step(&mut current, &grad, &mut adam, lr).map_err(with_epoch)?;
        }
        let train_loss = train_total / dataset.len() as f64;
        let val_loss = validate(&current).map_err(with_epoch)?;
        if val_loss.is_nan() {
            return Err(Error::Numeric(format!("stage {stage} epoch {epoch}: validation loss is NaN")));
        }
        epochs.push(EpochRecord { epoch, train_loss, val_loss, lr });

        if val_loss < best_val {
            best_val = val_loss;
            best_params = current.clone();
            best_epoch = epoch;
        }
        if val_loss < reference - IMPROVEMENT_EPS {
            reference = val_loss;
            since_improvement = 0;
            since_lr_change = 0;
        } else {
            since_improvement += 1;
            since_lr_change += 1;
            if since_lr_change >= cfg.lr_plateau_patience {
                lr *= cfg.lr_reduce_factor;
                since_lr_change = 0;
            }
        }
        if since_improvement >= cfg.patience_epochs {
            stopped_early = epoch < cfg.epochs_per_stage;
            break;
        }
    }

    if best_epoch == 0 {
        return Err(Error::Numeric(format!("stage {stage}: no finite validation loss recorded")));
    }
    Ok((
        best_params,
        StageReport { stage, epochs, best_epoch, best_val_loss: best_val, stopped_early },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::Phase;
    use crate::tensor::{fft2c, ComplexImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64, rows: &[usize]) -> TrainSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..64).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let img = ComplexImage::new(8, 8, data).unwrap();
        let omega = Mask::from_rows(8, 8, rows).unwrap();
        TrainSample::new(omega.masked(&fft2c(&img).unwrap()).unwrap(), omega, format!("s{seed}")).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            lambda_band: 1,
            num_phases: 2,
            transform: Transform::Haar { levels: 1 },
            ..Default::default()
        }
    }

    #[test]
    fn sample_rejects_energy_outside_mask() {
        let omega = Mask::from_rows(4, 4, &[1]).unwrap();
        let k = KSpace::from_real(4, 4, &[1.0; 16]).unwrap();
        assert!(TrainSample::new(k, omega, "x").is_err());
    }

    #[test]
    fn zero_params_loss_in_closed_form() {
        let s = sample(1, &[0, 2, 3, 4, 5, 7]);
        let lambda = Mask::from_rows(8, 8, &[3, 4, 7]).unwrap();
        let params = UnrolledParams::uniform(3, 0.0, 0.0).unwrap();
        let c = TrainConfig { gamma: 0.0, ..cfg() };
        let eval = selfsup_loss(&s, &lambda, &params, &c).unwrap();
        let dropped: f64 = [0usize, 2, 5]
            .iter()
            .flat_map(|&r| (0..8).map(move |col| (r, col)))
            .map(|(r, col)| s.target_k.get(r, col).norm_sqr())
            .sum();
        let expect = dropped / s.omega.kept_count() as f64;
        assert!((eval.main - expect).abs() <= 1e-12 * expect);
        assert!(eval.consistency < 1e-25);
        assert_eq!(eval.loss, eval.main);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        // Λ = Ω = full grid with a pass-through network.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..64).map(|_| Complex64::new(rng.random(), 0.0)).collect();
        let img = ComplexImage::new(8, 8, data).unwrap();
        let full = Mask::full(8, 8);
        let s = TrainSample::new(fft2c(&img).unwrap(), full.clone(), "p").unwrap();
        let params = UnrolledParams::uniform(1, 1.0, 0.0).unwrap();
        let eval = selfsup_loss(&s, &full, &params, &cfg()).unwrap();
        assert!(eval.loss < 1e-25);
    }

    #[test]
    fn lambda_outside_omega_is_rejected() {
        let s = sample(2, &[2, 3, 4]);
        let lambda = Mask::from_rows(8, 8, &[1]).unwrap();
        let params = UnrolledParams::uniform(1, 1.0, 0.0).unwrap();
        assert!(matches!(selfsup_loss(&s, &lambda, &params, &cfg()), Err(Error::MaskViolation)));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let s = sample(4, &[0, 1, 3, 4, 5, 6]);
        let lambda = Mask::from_rows(8, 8, &[3, 4, 6]).unwrap();
        let params = UnrolledParams::new(vec![Phase { rho: 0.8, theta: 0.05 }, Phase { rho: 1.1, theta: 0.03 }]).unwrap();
        let c = cfg();
        let grad = selfsup_loss(&s, &lambda, &params, &c).unwrap().param_grad(&params).unwrap();
        let h = 1e-5;
        let f = |p: &UnrolledParams| selfsup_loss(&s, &lambda, p, &c).unwrap().loss;
        for k in 0..2 {
            for which in 0..2 {
                let mut plus = params.clone();
                let mut minus = params.clone();
                if which == 0 {
                    plus.phases[k].rho += h;
                    minus.phases[k].rho -= h;
                } else {
                    plus.phases[k].theta += h;
                    minus.phases[k].theta -= h;
                }
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = if which == 0 { grad.d_rho[k] } else { grad.d_theta[k] };
                assert!((an - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "phase {k} param {which}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = UnrolledParams::uniform(1, 1.0, 0.5).unwrap();
        let mut st = AdamState::new(1);
        adam_step(&mut p, &ParamGrad { d_rho: vec![1.0], d_theta: vec![0.0] }, &mut st, 0.001).unwrap();
        let delta = 1.0 - p.phases[0].rho;
        assert!((0.0009..=0.001).contains(&delta), "{delta}");
        assert_eq!(p.phases[0].theta, 0.5);

        let before = p.clone();
        let m_before = st.first_moment().to_vec();
        adam_step(&mut p, &ParamGrad::zeros(1), &mut st, 0.001).unwrap();
        // The decayed first moment still moves rho; theta has no history.
        assert_eq!(p.phases[0].theta, before.phases[0].theta);
        assert_eq!(st.first_moment()[0], 0.9 * m_before[0]);
        assert_eq!(st.step_count(), 2);
    }

    #[test]
    fn adam_from_fresh_state_ignores_zero_gradient() {
        let mut p = UnrolledParams::uniform(2, 1.0, 0.1).unwrap();
        let mut st = AdamState::new(2);
        adam_step(&mut p, &ParamGrad::zeros(2), &mut st, 0.01).unwrap();
        assert_eq!(p, UnrolledParams::uniform(2, 1.0, 0.1).unwrap());
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = UnrolledParams::uniform(2, 1.0, 0.1).unwrap();
        let mut st = AdamState::new(2);
        let g = ParamGrad { d_rho: vec![0.0, 0.0], d_theta: vec![0.0, f64::NAN] };
        let err = adam_step(&mut p, &g, &mut st, 0.01).unwrap_err();
        assert!(err.to_string().contains("theta[1]"));
    }

    #[test]
    fn adam_keeps_thresholds_non_negative() {
        let mut p = UnrolledParams::uniform(1, 1.0, 0.0).unwrap();
        let mut st = AdamState::new(1);
        adam_step(&mut p, &ParamGrad { d_rho: vec![0.0], d_theta: vec![5.0] }, &mut st, 0.1).unwrap();
        assert_eq!(p.phases[0].theta, 0.0);
    }

    #[test]
    fn frozen_validation_stops_after_patience() {
        let data = vec![sample(5, &[1, 3, 4, 6])];
        let c = TrainConfig { patience_epochs: 3, epochs_per_stage: 20, ..cfg() };
        let params = c.initial_params().unwrap();
        let (_, report) = train_stage_with(&data, &params, &c, 0, |_| Ok(1.0)).unwrap();
        assert_eq!(report.epochs.len(), 4);
        assert!(report.stopped_early);
        assert_eq!(report.best_epoch, 1);
    }

    #[test]
    fn lr_decays_on_plateau() {
        let data = vec![sample(5, &[1, 3, 4, 6])];
        let c = TrainConfig { patience_epochs: 10, lr_plateau_patience: 2, epochs_per_stage: 8, ..cfg() };
        let params = c.initial_params().unwrap();
        let (_, report) = train_stage_with(&data, &params, &c, 0, |_| Ok(1.0)).unwrap();
        let lrs: Vec<f64> = report.epochs.iter().map(|e| e.lr).collect();
        assert_eq!(lrs[0], 0.001);
        for w in lrs.windows(2) {
            assert!(w[1] == w[0] || w[1] == w[0] * 0.5);
        }
        assert_eq!(lrs[7], 0.001 * 0.125);
    }

    #[test]
    fn empty_dataset_rejected() {
        let c = cfg();
        let empty: Vec<TrainSample> = Vec::new();
        let r = train_stage(&empty, &c.initial_params().unwrap(), &c, 0, &[sample(1, &[3, 4])]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    fn phantom_sample(seed: u64) -> TrainSample {
        use crate::data::phantom::{gen_phantom, simulate_acquisition, PhantomKind, PhantomSpec};
        let img = gen_phantom(&PhantomSpec {
            height: 16,
            width: 16,
            kind: PhantomKind::RandomEllipses { count: 3 },
            noise_sigma: 0.0,
            seed,
        })
        .unwrap();
        let omega = Mask::from_rows(16, 16, &[0, 3, 6, 7, 8, 9, 11, 14]).unwrap();
        simulate_acquisition(&img, &omega, 0.0, 0, &format!("p{seed}")).unwrap()
    }

    #[test]
    fn training_reduces_validation_loss_and_is_deterministic() {
        let data = vec![phantom_sample(1)];
        let val = vec![phantom_sample(2)];
        let c = TrainConfig { epochs_per_stage: 20, ..cfg() };
        let p0 = c.initial_params().unwrap();
        let (best, report) = train_stage(&data, &p0, &c, 0, &val).unwrap();
        let first = report.epochs[0].val_loss;
        let last = report.epochs.last().unwrap().val_loss;
        assert!(last <= first, "{first} -> {last}");
        assert!(report.epochs.len() <= 20);

        let recomputed = validation_loss(&val, &best, &c).unwrap();
        assert_eq!(recomputed, report.best_val_loss);
        let min = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(min, report.best_val_loss);

        let (best2, report2) = train_stage(&data, &p0, &c, 0, &val).unwrap();
        assert_eq!(best, best2);
        assert_eq!(report, report2);
    }

    #[test]
    fn report_serialization() {
        let r = StageReport {
            stage: 1,
            epochs: vec![EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25, lr: 0.001 }],
            best_epoch: 1,
            best_val_loss: 0.25,
            stopped_early: false,
        };
        assert_eq!(r.to_csv(), "epoch,train_loss,val_loss,lr\n1,5e-1,2.5e-1,1e-3\n");
        assert!(r.to_log().contains("stage 1 epoch 1"));
    }
}
