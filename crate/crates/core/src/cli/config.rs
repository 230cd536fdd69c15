//! Flat `key = value` run configuration.
//!
//! Blank lines and everything after `#` are ignored. Every key must be known;
//! relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::dataset::DatasetSpec;
use crate::data::io::read_text;
use crate::data::phantom::{PhantomKind, PhantomSpec};
use crate::error::{Error, Result};
use crate::masks::{LineKind, MaskSpec};
use crate::recon::{ReconConfig, Transform};
use crate::refine::{FinalSelection, RefineConfig, RefineMaskMode};
use crate::seed::{self, tag};
use crate::train::{LambdaMode, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub run_dir: PathBuf,
    /// Where `simulate` writes and the other commands read the dataset.
    pub dataset_dir: PathBuf,
    pub master_seed: u64,

    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub phantom: PhantomKind,
    pub noise_sigma: f64,

    pub acceleration: usize,
    pub acs_lines: usize,
    pub mask_kind: LineKind,

    /// Classical ISTA baseline used by `eval`.
    pub recon: ReconConfig,
    pub refine: RefineConfig,
    /// Multiplier applied to absolute-error maps before 8-bit quantization.
    pub error_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "experiment".into(),
            run_dir: PathBuf::from("run"),
            dataset_dir: PathBuf::from("run/data"),
            master_seed: 0,
            height: 64,
            width: 64,
            n_train: 20,
            n_val: 5,
            n_test: 10,
            phantom: PhantomKind::RandomEllipses { count: 6 },
            noise_sigma: 0.01,
            acceleration: 4,
            // Library defaults assume 256 rows; scale the central bands down so
            // a 64-row grid still leaves room for distinct bank masks.
            acs_lines: 4,
            mask_kind: LineKind::RandomLine,
            recon: ReconConfig::default(),
            refine: RefineConfig {
                bank_acs_lines: 4,
                train: TrainConfig { lambda_band: 2, ..TrainConfig::default() },
                ..RefineConfig::default()
            },
            error_scale: 5.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "experiment",
    "run_dir",
    "dataset_dir",
    "seed",
    "height",
    "width",
    "n_train",
    "n_val",
    "n_test",
    "phantom",
    "ellipses",
    "noise_sigma",
    "acceleration",
    "acs_lines",
    "mask_kind",
    "lambda_ratio",
    "lambda_band",
    "lambda_mode",
    "reg_weight",
    "num_iters",
    "transform",
    "step_size",
    "gamma",
    "lr",
    "batch_size",
    "epochs_per_stage",
    "patience_epochs",
    "lr_reduce_factor",
    "lr_plateau_patience",
    "num_phases",
    "init_rho",
    "init_theta",
    "num_stages",
    "mask_bank_size",
    "bank_acceleration",
    "bank_acs_lines",
    "bank_kind",
    "keep_acquired",
    "refine_mask",
    "warm_start",
    "final_selection",
    "error_scale",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for key `{key}`")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{raw}` for key `{key}` (expected true/false)"))),
    }
}

fn choice<T: Copy>(key: &str, raw: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(name, _)| *name == raw).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("invalid value `{raw}` for key `{key}` (expected one of {})", names.join(", ")))
    })
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {line_no}: expected `key = value`")));
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {line_no}: unknown config key `{key}`")));
        }
        if pairs.iter().any(|(_, k, _)| k == key) {
            return Err(Error::Config(format!("line {line_no}: duplicate config key `{key}`")));
        }
        pairs.push((line_no, key.to_string(), raw.to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut run_dir = None;
        let mut dataset_dir = None;
        let mut ellipses = None;
        let mut phantom_name = None;
        let t = &mut cfg.refine.train;
        for (_, key, raw) in parse_pairs(text)? {
            let (k, r) = (key.as_str(), raw.as_str());
            match k {
                "experiment" => cfg.experiment = raw.clone(),
                "run_dir" => run_dir = Some(base_dir.join(r)),
                "dataset_dir" => dataset_dir = Some(base_dir.join(r)),
                "seed" => cfg.master_seed = value(k, r)?,
                "height" => cfg.height = value(k, r)?,
                "width" => cfg.width = value(k, r)?,
                "n_train" => cfg.n_train = value(k, r)?,
                "n_val" => cfg.n_val = value(k, r)?,
                "n_test" => cfg.n_test = value(k, r)?,
                "phantom" => phantom_name = Some(choice(k, r, &[("shepp-logan", false), ("random-ellipses", true)])?),
                "ellipses" => ellipses = Some(value(k, r)?),
                "noise_sigma" => cfg.noise_sigma = value(k, r)?,
                "acceleration" => cfg.acceleration = value(k, r)?,
                "acs_lines" => cfg.acs_lines = value(k, r)?,
                "mask_kind" => cfg.mask_kind = value(k, r)?,
                "lambda_ratio" => t.lambda_ratio = value(k, r)?,
                "lambda_band" => t.lambda_band = value(k, r)?,
                "lambda_mode" => {
                    t.lambda_mode = choice(k, r, &[("resample", LambdaMode::Resample), ("fixed", LambdaMode::Fixed)])?
                }
                "reg_weight" => cfg.recon.reg_weight = value(k, r)?,
                "num_iters" => cfg.recon.num_iters = value(k, r)?,
                "transform" => {
                    let tr: Transform = value(k, r)?;
                    cfg.recon.transform = tr;
                    t.transform = tr;
                }
                "step_size" => cfg.recon.step_size = value(k, r)?,
                "gamma" => t.gamma = value(k, r)?,
                "lr" => t.lr = value(k, r)?,
                "batch_size" => t.batch_size = value(k, r)?,
                "epochs_per_stage" => t.epochs_per_stage = value(k, r)?,
                "patience_epochs" => t.patience_epochs = value(k, r)?,
                "lr_reduce_factor" => t.lr_reduce_factor = value(k, r)?,
                "lr_plateau_patience" => t.lr_plateau_patience = value(k, r)?,
                "num_phases" => t.num_phases = value(k, r)?,
                "init_rho" => t.init_rho = value(k, r)?,
                "init_theta" => t.init_theta = value(k, r)?,
                "num_stages" => cfg.refine.num_stages = value(k, r)?,
                "mask_bank_size" => cfg.refine.mask_bank_size = value(k, r)?,
                "bank_acceleration" => cfg.refine.bank_acceleration = value(k, r)?,
                "bank_acs_lines" => cfg.refine.bank_acs_lines = value(k, r)?,
                "bank_kind" => cfg.refine.bank_kind = value(k, r)?,
                "keep_acquired" => cfg.refine.keep_acquired = flag(k, r)?,
                "refine_mask" => {
                    cfg.refine.mask_mode = choice(
                        k,
                        r,
                        &[("union", RefineMaskMode::UnionWithAcquired), ("simulated", RefineMaskMode::SimulatedOnly)],
                    )?
                }
                "warm_start" => cfg.refine.warm_start = flag(k, r)?,
                "final_selection" => {
                    cfg.refine.final_selection = choice(
                        k,
                        r,
                        &[("best-validation", FinalSelection::BestValidation), ("last-stage", FinalSelection::LastStage)],
                    )?
                }
                "error_scale" => cfg.error_scale = value(k, r)?,
                _ => unreachable!("key list and match arms disagree: {k}"),
            }
        }
        cfg.phantom = match (phantom_name, ellipses) {
            (Some(false), Some(_)) => return Err(Error::Config("`ellipses` requires phantom = random-ellipses".into())),
            (Some(false), None) => PhantomKind::SheppLogan,
            (_, Some(count)) => PhantomKind::RandomEllipses { count },
            (_, None) => cfg.phantom,
        };
        cfg.run_dir = run_dir.unwrap_or_else(|| base_dir.join("run"));
        cfg.dataset_dir = dataset_dir.unwrap_or_else(|| cfg.run_dir.join("data"));
        cfg.set_seed(cfg.master_seed);
        Ok(cfg)
    }

    /// Sets the master seed; every other seed is derived from it.
    pub fn set_seed(&mut self, master: u64) {
        self.master_seed = master;
        self.refine.train.master_seed = master;
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            n_train: self.n_train,
            n_val: self.n_val,
            n_test: self.n_test,
            phantom: PhantomSpec {
                height: self.height,
                width: self.width,
                kind: self.phantom,
                noise_sigma: self.noise_sigma,
                seed: seed::derive(self.master_seed, &[tag::PHANTOM]),
            },
            mask: MaskSpec {
                height: self.height,
                width: self.width,
                acceleration: self.acceleration,
                acs_lines: self.acs_lines,
                kind: self.mask_kind,
                seed: seed::derive(self.master_seed, &[tag::OMEGA]),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("height and width must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if !(self.error_scale > 0.0 && self.error_scale.is_finite()) {
            return Err(Error::Config("error_scale must be positive".into()));
        }
        self.dataset_spec().mask.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.recon.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.recon.transform.check(self.height, self.width).map_err(|e| Error::Config(e.to_string()))?;
        self.refine.validate()
    }
}
