//! `mdctgan` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 unreadable input,
//! 3 computation failure. Verbosity comes only from `MDCTGAN_LOG`
//! (`error`, `warn`, `info`, `debug`).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mdctgan::neural::ModelConfig;

pub use config::{AppConfig, DataConfig};

/// Error carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub const USAGE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const COMPUTE: i32 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::usage(message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            code: Self::PARSE,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self {
            code: Self::COMPUTE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<mdctgan::Error> for CliError {
    fn from(e: mdctgan::Error) -> Self {
        use mdctgan::Error as E;
        let code = match &e {
            E::Config(_) => Self::USAGE,
            E::Parse(_) | E::UnsupportedFormat(_) | E::Io(_) => Self::PARSE,
            E::Shape(_) | E::Divergence { .. } => Self::COMPUTE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mdctgan",
    version,
    about = "MDCT analysis, perceptual noise and toy GAN training"
)]
pub struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrogram, signed amplitudes, tonality and thresholds of a WAV.
    Analyze {
        wav: PathBuf,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// MDCT, psychoacoustic noise, inverse MDCT; prints per-band noise.
    Roundtrip {
        wav: PathBuf,
        out_wav: PathBuf,
        /// Noise scale c; defaults to the config's noise_scale.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Reduced spectrograms after 0..=L octave folds.
    Reduce {
        wav: PathBuf,
        #[arg(short = 'L', long, default_value_t = 2)]
        folds: usize,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Generator and discriminator activation shapes.
    Shapes {
        #[arg(long, default_value_t = 6)]
        blocks: usize,
        /// Seed spectrogram, blocks x bands.
        #[arg(long, default_value = "4x2")]
        seed: String,
        #[arg(long, default_value_t = 512)]
        latent: usize,
        /// Comma-separated channels per depth, `blocks + 1` entries.
        #[arg(long, value_delimiter = ',')]
        channels: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        output_channels: usize,
    },
    /// Trains the GAN described by a config file.
    Train {
        #[arg(value_name = "CONFIG")]
        train_config: PathBuf,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
        /// Overrides `[train] iterations`.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Generates audio from a checkpoint.
    Sample {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
        /// Latent seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn base_config(path: Option<&Path>) -> Result<AppConfig, CliError> {
    match path {
        Some(p) => AppConfig::load(p),
        None => Ok(AppConfig::default()),
    }
}

/// Runs a parsed command, writing reports to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::compute(format!("cannot write report: {e}"));
    match cli.command {
        Command::Analyze { wav, out_dir } => {
            let cfg = base_config(cli.config.as_deref())?;
            let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let report = commands::analyze(&cfg, &wav, &dir)?;
            write!(out, "{report}").map_err(io)
        }
        Command::Roundtrip {
            wav,
            out_wav,
            noise,
        } => {
            let cfg = base_config(cli.config.as_deref())?;
            let c = noise.unwrap_or(cfg.noise_scale);
            let report = commands::roundtrip(&cfg, &wav, &out_wav, c)?;
            write!(out, "{report}").map_err(io)
        }
        Command::Reduce {
            wav,
            folds,
            out_dir,
        } => {
            let cfg = base_config(cli.config.as_deref())?;
            let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let report = commands::reduce(&cfg, &wav, folds, &dir)?;
            write!(out, "{report}").map_err(io)
        }
        Command::Shapes {
            blocks,
            seed,
            latent,
            channels,
            output_channels,
        } => {
            let (seed_blocks, seed_bands) = commands::parse_seed_shape(&seed)?;
            let model = ModelConfig {
                latent_dim: latent,
                num_blocks: blocks,
                seed_blocks,
                seed_bands,
                channels,
                output_channels,
            };
            let table = commands::shapes(&model)?;
            let (m, n, c) = model.output_shape();
            write!(out, "{table}").map_err(io)?;
            writeln!(out, "output: {m} × {n} × {c}").map_err(io)
        }
        Command::Train {
            train_config,
            out_dir,
            iterations,
        } => {
            let mut cfg = AppConfig::load(&train_config)?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
                cfg.validate()?;
            }
            let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let outcome = commands::train(&cfg, &dir)?;
            let last = outcome.log.last();
            writeln!(
                out,
                "trained {} iterations; final wasserstein {:.4}, generated tonality {:.4}",
                outcome.log.len(),
                last.map_or(f64::NAN, |s| s.wasserstein),
                last.map_or(f64::NAN, |s| s.gen_tonality)
            )
            .map_err(io)?;
            writeln!(out, "wrote {}", dir.join("losses.csv").display()).map_err(io)?;
            writeln!(out, "wrote {}", dir.join("checkpoint.mp3n").display()).map_err(io)
        }
        Command::Sample {
            checkpoint,
            count,
            out_dir,
            seed,
        } => {
            let cfg = base_config(cli.config.as_deref())?;
            let dir = out_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let report = commands::sample(&checkpoint, count, &dir, seed.unwrap_or(cfg.seed))?;
            write!(out, "{report}").map_err(io)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::USAGE } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Initialises stderr logging from `MDCTGAN_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MDCTGAN_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}
