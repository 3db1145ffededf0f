//! Command-line front end for `groundseg`.
//!
//! Exit codes: 0 success, 1 semantic findings (invalid samples skipped,
//! markup diagnostics, a filter that keeps nothing), 2 operational failure.

mod dataset;
mod evaluate;
mod square_demo;
mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use evaluate::{cmd_evaluate, render_report};
pub use validate::cmd_validate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "groundseg", version, about = "Multi-image pixel-grounding evaluation and dataset tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Check grounded responses for markup errors and the mask cap.
    Validate(ValidateArgs),
    /// Build, filter and summarize datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the relational query encoder on random or supplied tensors.
    SquareDemo(SquareDemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
    Md,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Ground-truth sample JSONL.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSONL keyed by sample_id; defaults to the predictions inside --gt.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Embedding file (EMB1 format) or `hash-fallback`.
    #[arg(long, default_value = "hash-fallback")]
    pub embeddings: String,
    /// Synonym pairs for METEOR, one pair per line.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sim_threshold: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Report destination; printed to stdout when omitted.
    #[arg(long, visible_alias = "report")]
    pub out: Option<PathBuf>,
    /// Count and exclude malformed samples instead of aborting (exit 1 if any).
    #[arg(long)]
    pub skip_invalid: bool,
    /// Include per-sample metrics in the report.
    #[arg(long)]
    pub per_sample: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// JSONL of `{"text": ..., "num_images": ...}` records.
    #[arg(long)]
    pub input: PathBuf,
    /// Diagnostics JSONL destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub max_masks: usize,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Sample 2- or 3-image sets around every corpus image.
    BuildSamples(BuildSamplesArgs),
    /// Apply the QA filtering rules.
    Filter(FilterArgs),
    /// Summarize a QA file.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Nn,
    Category,
}

#[derive(Debug, Clone, Args)]
pub struct BuildSamplesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Nn)]
    pub strategy: StrategyArg,
    /// Neighbourhood size; 20 for nn and 5 for category when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// JSON list of compatible object-name pairs (category strategy).
    #[arg(long)]
    pub compat: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub sets_per_anchor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_masks: usize,
    #[arg(long, default_value_t = 3)]
    pub min_clause_words: usize,
    /// Kept QA JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Filter report JSON; stderr when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// Corpus used for the annotation-source breakdown.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SquareDemoArgs {
    /// Parameter file written by a previous run; random parameters otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Rank-3 feature tensor `N_I × L_V × D_V`; random features otherwise.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub images: usize,
    #[arg(long, default_value_t = 16)]
    pub feature_len: usize,
    #[arg(long, default_value_t = 24)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub queries: usize,
    #[arg(long, default_value_t = 16)]
    pub query_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub instruction_len: usize,
    #[arg(long, default_value_t = 32)]
    pub llm_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output tensors: relational representation then the per-image stack.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the parameters used.
    #[arg(long)]
    pub save_params: Option<PathBuf>,
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Dataset(c) => dataset::cmd_dataset(&c),
        Command::SquareDemo(a) => square_demo::cmd_square_demo(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

/// File writer, or stdout when `path` is `None`.
fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_unit(name: &str, v: f64) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!("{name} must lie in [0, 1], got {v}");
    }
    Ok(())
}
