//! The `fundiff` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 numeric
//! failure during training, 4 checkpoint missing, corrupt or mismatched,
//! 1 anything else (I/O).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::{cmd_eval, cmd_inspect_schedule, cmd_sample, cmd_train, schedule_table, SampleArgs};
pub use config::{RunConfig, SampleConfig};

#[derive(Debug, Parser)]
#[command(name = "fundiff", version, about = "Diffusion models over functions on continuous domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command's own randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a denoiser; writes checkpoints and loss.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a function from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Nodes per axis of the dumped grid (0 disables).
        #[arg(long)]
        grid: Option<usize>,
        /// Number of generating-process frames to render.
        #[arg(long)]
        trace: Option<usize>,
        /// CSV of extra query points, one point per row.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Condition as inline JSON: `[[x, y], ...]` or `{"points": [...], "values": [...]}`.
        #[arg(long, conflicts_with = "sample_index")]
        condition: Option<String>,
        /// Use the condition of this training-family sample.
        #[arg(long)]
        sample_index: Option<usize>,
    },
    /// Score a checkpoint (plus oracle and baseline rows) on held-out samples.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Without a checkpoint only the oracle and baseline rows are computed.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        num_samples: Option<usize>,
    },
    /// Print the timestep grid with alpha, sigma and SNR.
    InspectSchedule {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Json(_) => 2,
        Error::NonFinite { .. } => 3,
        Error::Checkpoint { .. } => 4,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config {
                path: "--threads".into(),
                message: "must be >= 1".into(),
            });
        }
        // A second call in one process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, resume } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            set_threads(common.threads)?;
            cmd_train(&cfg, &common.out, resume.as_deref())
        }
        Command::Sample {
            common,
            ckpt,
            steps,
            grid,
            trace,
            queries,
            condition,
            sample_index,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.sample.seed = s;
            }
            if steps.is_some() {
                cfg.sample.steps = steps;
            }
            if let Some(g) = grid {
                cfg.sample.grid = g;
            }
            if let Some(k) = trace {
                cfg.sample.trace = k;
            }
            if let Some(i) = sample_index {
                cfg.sample.sample_index = i;
            }
            cfg.validate()?;
            set_threads(common.threads)?;
            let args = SampleArgs {
                ckpt,
                queries,
                condition,
            };
            cmd_sample(&cfg, &common.out, &args)
        }
        Command::Eval {
            common,
            ckpt,
            steps,
            num_samples,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            if steps.is_some() {
                cfg.eval.steps = steps;
            }
            if let Some(n) = num_samples {
                cfg.eval.num_samples = n;
            }
            cfg.validate()?;
            set_threads(common.threads)?;
            cmd_eval(&cfg, &common.out, ckpt.as_deref()).map(|_| ())
        }
        Command::InspectSchedule { common, steps } => {
            let cfg = load_config(&common)?;
            cmd_inspect_schedule(&cfg, steps.unwrap_or(cfg.schedule.num_steps))
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
