//! `xrpipe` — batch workflows over the core library.
//!
//! Subcommands: `evaluate`, `split`, `prompt`, `qlora-demo`, `quantize`.
//! Data goes to files or standard output; logs and the resolved config go
//! to standard error. Every subcommand is deterministic given its inputs,
//! seed, and flags.
//!
//! Exit codes: 0 success, 1 input or parse error, 2 usage or contract
//! error, 3 numerical failure.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use xrpipe_core::corpus::Partition;
use xrpipe_core::corpus::PromptMode;
use xrpipe_core::metrics::Smoothing;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input data.
    Input(String),
    /// Violated usage contract: mismatched ids, missing required flags.
    Contract(String),
    /// Numerical failure such as divergent training.
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Contract(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Contract(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<xrpipe_core::corpus::CorpusError> for CliError {
    fn from(e: xrpipe_core::corpus::CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<xrpipe_core::quantize::QuantizeError> for CliError {
    fn from(e: xrpipe_core::quantize::QuantizeError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<xrpipe_core::metrics::MetricsError> for CliError {
    fn from(e: xrpipe_core::metrics::MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<xrpipe_core::trainer::TrainError> for CliError {
    fn from(e: xrpipe_core::trainer::TrainError) -> Self {
        use xrpipe_core::trainer::TrainError;
        match e {
            TrainError::DivergentStep => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Contract(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<xrpipe_core::adapter::AdapterError> for CliError {
    fn from(e: xrpipe_core::adapter::AdapterError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionArg {
    Train,
    Val,
    Test,
}

impl From<PartitionArg> for Partition {
    fn from(p: PartitionArg) -> Partition {
        match p {
            PartitionArg::Train => Partition::Train,
            PartitionArg::Val => Partition::Val,
            PartitionArg::Test => Partition::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Train,
    Infer,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> PromptMode {
        match m {
            ModeArg::Train => PromptMode::Train,
            ModeArg::Infer => PromptMode::Infer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingArg {
    None,
    Epsilon,
}

impl From<SmoothingArg> for Smoothing {
    fn from(s: SmoothingArg) -> Smoothing {
        match s {
            SmoothingArg::None => Smoothing::None,
            SmoothingArg::Epsilon => Smoothing::Epsilon,
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "xrpipe", version, about = "Report evaluation, corpus preparation, and desk-scale quantized fine-tuning")]
pub struct Cli {
    /// Seed for seeded subcommands; overrides any config-file seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Primary output path; standard output when omitted (where allowed).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Config file (TOML or JSON) for the demo trainer.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Extra progress detail on standard error.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Score candidate reports against references.
    Evaluate {
        /// Line-delimited JSON records {"id", "report"}.
        #[arg(long)]
        candidates: PathBuf,
        /// Line-delimited JSON records {"id", "report"}; extra fields of
        /// full study records are ignored.
        #[arg(long)]
        references: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        smoothing: SmoothingArg,
        /// Average sentence-level scores instead of pooling counts.
        #[arg(long)]
        sentence_level: bool,
        /// Precision weight in the harmonic-mean stage.
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Fragmentation penalty scale.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Fragmentation penalty exponent.
        #[arg(long, default_value_t = 3.0)]
        frag_beta: f64,
        /// Recall weighting in the LCS F-measure.
        #[arg(long, default_value_t = 1.0)]
        rouge_beta: f64,
    },
    /// Partition a corpus 70/10/20 with a seeded shuffle.
    Split {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Render instruction prompts for one partition.
    Prompt {
        #[arg(long)]
        corpus: PathBuf,
        /// Split manifest produced by `split`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        partition: PartitionArg,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Train the toy adapter model on the synthetic copy task.
    QloraDemo {
        /// Named adapter roster ("llama31-8b") or a JSON spec file whose
        /// trainable-parameter count is reported.
        #[arg(long)]
        target_spec: Option<String>,
        /// Print the trainable-parameter count and exit.
        #[arg(long)]
        params_only: bool,
        /// Write the best adapter factors to this checkpoint path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the config-file epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the config-file micro-batch size.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Override the config-file accumulation steps.
        #[arg(long)]
        grad_accum_steps: Option<usize>,
        /// Override the config-file peak learning rate.
        #[arg(long)]
        lr_max: Option<f64>,
        /// Override the config-file warmup step count.
        #[arg(long)]
        warmup_steps: Option<u64>,
        /// Store optimizer moments as blockwise 8-bit vectors.
        #[arg(long)]
        eight_bit_state: bool,
    },
    /// Quantize a dense matrix into an XRQ4 container.
    Quantize {
        /// Dense input: CSV rows of floats, or the XRDM binary format.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 64)]
        block_size: usize,
        /// Bytes per stored scale (4 or 8).
        #[arg(long, default_value_t = 4)]
        scale_width: u8,
        /// Where the reconstruction-error statistics JSON goes; standard
        /// output when omitted.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    // One reproducibility line per run: the fully resolved invocation.
    eprintln!(
        "config: {}",
        serde_json::to_string(&cli).expect("cli args always serialize")
    );
    match &cli.command {
        Command::Evaluate { .. } => commands::evaluate::run(&cli),
        Command::Split { .. } => commands::split_cmd::run(&cli),
        Command::Prompt { .. } => commands::prompt::run(&cli),
        Command::QloraDemo { .. } => commands::qlora_demo::run(&cli),
        Command::Quantize { .. } => commands::quantize_cmd::run(&cli),
    }
}
