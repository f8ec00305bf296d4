//! Command-line front end: `usv calibrate | trial | ekf | metrics | report | ingest`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 protocol failure, 4 I/O.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use usv_core::config::{ConfigError, SimConfig};
use usv_core::ingest::IngestError;
use usv_core::log::{LogError, Side};
use usv_core::metrics::{MetricsError, TrackSource};
use usv_core::plot::PlotError;
use usv_core::trial::TrialError;

mod commands;

pub use commands::run;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrialError> for CliError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Config(c) => c.into(),
            TrialError::Calibration { .. } | TrialError::Incomplete { .. } => CliError::Protocol(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::HeadingNotReached { .. } | MetricsError::BadExecuteIndex { .. } => CliError::Protocol(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "usv", version, about = "USV turning-circle trials, EKF replay and IMO compliance checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, for `ekf`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed for disturbances and sensor noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Turn side.
    #[arg(long, global = true, value_parser = parse_side)]
    pub side: Option<Side>,
}

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Truth,
    Estimate,
}

impl From<SourceArg> for TrackSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Truth => TrackSource::Truth,
            SourceArg::Estimate => TrackSource::Estimate,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the throttle giving 90% of the steady speed at 85% throttle.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Run turning-circle trials and write logs, metrics, compliance and plots.
    Trial {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; each runs in its own worker and directory.
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Vec<u64>,
    },
    /// Replay a log's sensor records through the filter and write the estimates.
    Ekf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: PathBuf,
    },
    /// Turning-circle metrics and IMO verdict for a log or for measured values.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "advance")]
        log: Option<PathBuf>,
        /// Vessel length in metres; the IMO limits scale with it.
        #[arg(long)]
        length: f64,
        #[arg(long, value_enum, default_value = "truth")]
        source: SourceArg,
        /// Measured advance in metres (instead of --log).
        #[arg(long, requires = "tactical_diameter", conflicts_with = "log")]
        advance: Option<f64>,
        /// Measured tactical diameter in metres (instead of --log).
        #[arg(long, requires = "advance")]
        tactical_diameter: Option<f64>,
    },
    /// Campaign table over several logs.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Vessel length for the IMO limits; defaults to each log's own.
        #[arg(long)]
        length: Option<f64>,
        #[arg(long, value_enum, default_value = "truth")]
        source: SourceArg,
    },
    /// Convert a field CSV track into a truth-only log.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: PathBuf,
        /// Datum of the lat/lon columns (wgs84).
        #[arg(long)]
        datum: Option<String>,
        /// Reference of the compass heading column (true-north).
        #[arg(long)]
        heading_ref: Option<String>,
        #[arg(long)]
        origin_lat: f64,
        #[arg(long)]
        origin_lon: f64,
        #[arg(long)]
        execute_index: usize,
        #[arg(long)]
        length: f64,
        #[arg(long)]
        approach_speed: Option<f64>,
    },
}

/// Load the config file (or defaults) and apply flag overrides.
pub fn resolve_config(common: &Common) -> Result<SimConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(side) = common.side {
        cfg.trial.side = side;
    }
    if let Some(seed) = common.seed {
        cfg.environment.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}
