//! `salrefine`: saliency maps from class activations, iterative updating,
//! superpixel refinement and evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Settings, Tunables};

/// Bad flags, bad config, or missing inputs. Exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "salrefine", version, about)]
struct Cli {
    /// Key=value settings file; flags take precedence.
    #[arg(long, global = true, env = "SALREFINE_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    tunables: Tunables,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Counting scenes, `NNNN_count{k}.png`, for `traintoy`.
    Blobs,
    /// Single-object scenes with blurred coarse maps, for `refine` and `eval`.
    Objects,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multi-scale class activation map from tensors or a toy model.
    Cam {
        #[arg(long)]
        image: PathBuf,
        /// Activation tensor, one per scale. Pairs with --grads.
        #[arg(long, requires = "grads", conflicts_with = "model")]
        features: Vec<PathBuf>,
        /// Gradient tensor, one per scale.
        #[arg(long, requires = "features")]
        grads: Vec<PathBuf>,
        /// Toy scorer checkpoint.
        #[arg(long, required_unless_present = "features")]
        model: Option<PathBuf>,
        /// Target class; the scorer's top class when omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..5))]
        class: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Superpixel refinement of a coarse map.
    Refine {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the saliency updating loop and writes every iteration.
    Sumdemo {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..5))]
        class: Option<u8>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Scores a directory of maps against same-named ground-truth masks.
    Eval {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// CSV report; with --json a `.json` twin is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the toy scorer on `*_count{k}.png` images.
    Traintoy {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = salrefine_core::toyscorer::DEFAULT_CHANNELS)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        /// Train on the classification loss only.
        #[arg(long)]
        no_mask: bool,
    },
    /// Writes a synthetic dataset.
    Synth {
        #[arg(long, value_enum, default_value = "blobs")]
        kind: SynthKind,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use salrefine_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            if matches!(e, E::InvalidArgument(_) | E::ClassRange(_)) {
                return 2;
            }
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::resolve(cli.config.as_deref(), &cli.tunables)?;
    let go = || commands::dispatch(cli.command, &settings);
    #[cfg(feature = "parallel")]
    if let Some(jobs) = settings.jobs {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        return pool.install(go);
    }
    go()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, rec| {
            let level = match rec.level() {
                log::Level::Warn => "warning".to_string(),
                l => l.as_str().to_lowercase(),
            };
            writeln!(buf, "{level}: {}", rec.args())
        })
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
