//! The `ahakit` command line.
//!
//! Each subcommand reads its inputs, runs one pipeline and writes its
//! outputs plus a `<out>.manifest.json` provenance record. Exit codes: 0 on
//! success, 1 for bad arguments or inputs, 2 for internal failures.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use ahakit_core::report::Format;
use ahakit_core::Task;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{generate_puzzles, parse_difficulties};
pub use config::ToolConfig;
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ahakit", version, about = "Reasoning-transcript puzzles, collection and analyses")]
pub struct Cli {
    /// TOML file with tool options.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Difficulties: a single value, an inclusive range `3..10`, or a list `3,5,7`.
    #[arg(long)]
    pub n: Option<String>,
    /// Puzzles per difficulty.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: Format,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate Knights-and-Knaves puzzles with verified unique solutions.
    GenKk(GenArgs),
    /// Generate Count Down puzzles with exact witnesses.
    GenCountdown(GenArgs),
    /// Collect transcripts with logprobs from a completions endpoint.
    Collect {
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        #[arg(long)]
        n: Option<String>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Read puzzles from a dataset file instead of generating them.
        #[arg(long, conflicts_with_all = ["task", "n"])]
        puzzles: Option<PathBuf>,
        /// deepseek, qwen or llama.
        #[arg(long)]
        family: String,
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name sent to the server and recorded on transcripts.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        topk: Option<u32>,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Name of the environment variable holding the API key.
        #[arg(long, value_name = "VAR")]
        api_key_env: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beginning-token distributions and aha/no-aha contrast.
    Tokens {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
        /// Keep only the top K tokens of each side.
        #[arg(long)]
        top: Option<usize>,
        /// Per-model distributions (model, role, token, count, proportion).
        #[arg(long)]
        dist_out: Option<PathBuf>,
        #[arg(long)]
        think_only: bool,
    },
    /// Sentence-level probability per (model, task, difficulty).
    Uncertainty {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
        /// Most uncertain sentences table.
        #[arg(long)]
        top_out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        no_dedupe: bool,
        #[arg(long)]
        token_level: bool,
        #[arg(long)]
        think_only: bool,
    },
    /// Language mixing, token repetition and path repetition rates.
    Collapse {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
        /// Per-transcript evidence as JSON.
        #[arg(long)]
        evidence: Option<PathBuf>,
    },
    /// RASM densities and distribution statistics.
    Rasm {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Token sets JSON; built-in sets when omitted.
        #[arg(long)]
        sets: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
        /// Statistics table; defaults to `<out stem>_stats.<ext>`.
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Per-layer PCA and PC2 difficulty silhouette.
    Latent {
        /// Directory with `layer_*.bin` files and `labels.json`.
        #[arg(long, required_unless_present = "layers")]
        dir: Option<PathBuf>,
        #[arg(long, num_args = 1.., requires = "labels", conflicts_with = "dir")]
        layers: Vec<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
        /// PC2 projections (group, layer, row, task, difficulty, pc2).
        #[arg(long)]
        pc2_out: Option<PathBuf>,
        #[arg(long)]
        joint: bool,
    },
    /// Run every transcript analysis (and optionally the latent sweep) into a directory.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        sets: Option<PathBuf>,
        #[arg(long)]
        latent: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: Format,
    },
    /// Write the planted-effect fixture tree.
    Fixtures {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// Parses `args` (program name first) and runs the subcommand; returns the
/// process exit code. Usage errors print to stderr.
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
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
