//! `dorsiflex`: corpus generation, feature selection, training, evaluation
//! and difficulty-adjustment workflows.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error. Failures print one line naming the failing stage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dorsiflex::models::ModelKind;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dorsiflex", version, about = "Wrist dorsiflexion recognition and adaptive difficulty")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic labeled corpus and its manifest
    Generate {
        /// Number of subjects
        #[arg(long)]
        subjects: Option<usize>,
        /// Segments per subject; 0 writes an empty manifest
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Rank features by mRMR on the training subjects
    Select {
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Number of features; without it k is chosen by leave-one-out 1-NN
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train a classifier on the training subjects and save it
    Train {
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Classifier to train
        #[arg(long)]
        kind: Option<ModelKind>,
        /// Number of mRMR features for the feature-based models
        #[arg(long)]
        k: Option<usize>,
        /// Model file [default: <out>/model.dfx]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate a saved model on the held-out subjects
    Eval {
        /// Corpus manifest [default: <out>/corpus/manifest.tsv]
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Model file [default: <out>/model.dfx]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Report metrics for a dorsiflexion-positive confusion matrix
    Metrics {
        /// True positives
        #[arg(long)]
        tp: u64,
        /// False positives
        #[arg(long)]
        fp: u64,
        /// False negatives
        #[arg(long = "fn")]
        fn_: u64,
        /// True negatives
        #[arg(long)]
        tn: u64,
        /// Reported accuracy,precision,recall,f_score to check against
        #[arg(long, value_delimiter = ',')]
        reported: Option<Vec<f64>>,
    },
    /// Classify a sensor recording once per cadence and write shake events
    Detect {
        /// Sensor CSV with t,ax,ay,az,gx,gy,gz columns
        #[arg(long)]
        sensor: PathBuf,
        /// Model file [default: <out>/model.dfx]
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Set thresholds from the first five dorsiflexion shakes of an event log
    Calibrate {
        /// Shake event CSV
        #[arg(long)]
        events: PathBuf,
    },
    /// Apply shake events or manual thresholds to a saved difficulty state
    Adjust {
        /// Difficulty state snapshot to update
        #[arg(long)]
        state: PathBuf,
        /// Shake event CSV to apply in order
        #[arg(long)]
        events: Option<PathBuf>,
        /// Set the range-of-motion threshold directly
        #[arg(long)]
        rom_threshold: Option<f64>,
        /// Set the speed threshold directly
        #[arg(long)]
        speed_threshold: Option<f64>,
    },
    /// Run a simulated player through the difficulty rules
    Simulate {
        /// Starting state; without it the configured thresholds are used
        #[arg(long)]
        state: Option<PathBuf>,
        /// Number of one-second prompts
        #[arg(long)]
        prompts: Option<usize>,
        /// Player's typical range of motion
        #[arg(long)]
        rom_capability: Option<f64>,
        /// Player's typical crossing rate
        #[arg(long)]
        speed_capability: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Select { .. } => "select",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Metrics { .. } => "metrics",
            Command::Detect { .. } => "detect",
            Command::Calibrate { .. } => "calibrate",
            Command::Adjust { .. } => "adjust",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// A failed stage and how the process should exit.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

/// Attaches the stage name to a core error and classifies it.
pub trait AtStage<T> {
    fn at(self, stage: &str) -> Result<T, Failure>;
}

impl<T> AtStage<T> for dorsiflex::Result<T> {
    fn at(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| {
            let msg = format!("{stage}: {e}");
            if e.is_data_error() {
                Failure::Data(msg)
            } else {
                Failure::Usage(msg)
            }
        })
    }
}

/// Failures writing outputs are the environment's, not the data's.
pub fn write_stage<T>(stage: &str, r: std::io::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Internal(format!("{stage}: {e}")))
}

fn resolve(global: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::Usage(format!("config: {e}")))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.global)?;
    commands::run(cfg, cli.command)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let command = cli.command.name();
    std::panic::set_hook(Box::new(|_| {}));
    let outcome = std::panic::catch_unwind(|| run(cli)).unwrap_or_else(|panic| {
        let what = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::Internal(format!("{command}: {what}")))
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dorsiflex: error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
