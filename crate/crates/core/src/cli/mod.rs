//! The `kspace-refine` command-line harness.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric or
//! other failure.

pub mod config;
mod eval;
mod export;
mod simulate;
mod train;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::io::{access_log, Access};
use crate::error::{Error, Result};
pub use config::RunConfig;

/// Caps the worker thread count.
pub const THREADS_ENV: &str = "KSPACE_REFINE_THREADS";
/// When set, the list of files the process opened is written to this path
/// on exit, one `R\t<path>` or `W\t<path>` line each.
pub const ACCESS_LOG_ENV: &str = "KSPACE_REFINE_ACCESS_LOG";
pub const LOCK_FILE: &str = ".lock";

#[derive(Parser, Debug)]
#[command(name = "kspace-refine", version, about = "Self-supervised CS-MRI reconstruction with iterative data refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the phantom dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the baseline (--stages 1) or run iterative refinement.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stages: Option<usize>,
    },
    /// Score a checkpoint and the baselines on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<run_dir>/final.krfp`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write reconstructions and error maps as PGM images.
    ExportImages {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subject ids; defaults to the whole test split.
        #[arg(long, value_delimiter = ',')]
        subjects: Vec<String>,
    },
}

/// Advisory lock on a run directory; removed on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::io(
                &path,
                std::io::Error::new(e.kind(), "run directory is in use by another invocation"),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // Fails only if a pool already exists (in-process reuse); keep that one.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| match e {
        Error::Io { .. } | Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let _lock = RunLock::acquire(&cfg.run_dir)?;
            simulate::run(&cfg)
        }
        Command::Train { common, stages } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = stages {
                cfg.refine.num_stages = n;
            }
            cfg.validate()?;
            let _lock = RunLock::acquire(&cfg.run_dir)?;
            train::run(&cfg)
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let _lock = RunLock::acquire(&cfg.run_dir)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.run_dir.join(train::FINAL_CHECKPOINT));
            eval::run(&cfg, &checkpoint)
        }
        Command::ExportImages { common, checkpoint, subjects } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let _lock = RunLock::acquire(&cfg.run_dir)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.run_dir.join(train::FINAL_CHECKPOINT));
            export::run(&cfg, &checkpoint, &subjects)
        }
    }
}

fn dump_access_log() {
    let Some(path) = std::env::var_os(ACCESS_LOG_ENV) else {
        return;
    };
    let text: String = access_log()
        .iter()
        .map(|(a, p)| format!("{}\t{}\n", if *a == Access::Read { 'R' } else { 'W' }, p.display()))
        .collect();
    if let Err(e) = fs::write(&path, text) {
        eprintln!("warning: could not write access log {}: {e}", PathBuf::from(path).display());
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    dump_access_log();
    code
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
