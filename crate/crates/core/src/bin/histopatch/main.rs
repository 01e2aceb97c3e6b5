//! Command-line front end for the histology patch pipeline:
//! patch -> augment -> train -> predict -> vote -> eval, plus dataset
//! splitting and first-layer filter export.
//!
//! Exit codes: 0 success, 1 data/validation error, 2 internal error.

mod commands;
mod patchdir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "histopatch",
    version,
    about = "Deterministic patching, augmentation, CNN training and majority-vote evaluation for histology images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tile manifest images into patches and write an index
    Patch(PatchArgs),
    /// Draw a seeded train/test split from a manifest
    Split(SplitArgs),
    /// Expand and/or stochastically augment a patch directory
    Augment(AugmentArgs),
    /// Train the baseline CNN on a labeled patch directory
    Train(TrainArgs),
    /// Classify patches with a checkpoint, writing a prediction file
    Predict(PredictArgs),
    /// Majority-vote prediction files into image-level decisions
    Vote(VoteArgs),
    /// Score decisions/predictions against truth and emit report tables
    Eval(EvalArgs),
    /// Render first-layer conv filters as an image grid
    Filters(FiltersArgs),
}

#[derive(clap::Args)]
struct PatchArgs {
    /// Manifest CSV: image_id,path,label
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for patch files and index.csv
    #[arg(long)]
    out: PathBuf,
    /// Patch grid columns
    #[arg(long, default_value_t = 4)]
    cols: u32,
    /// Patch grid rows
    #[arg(long, default_value_t = 3)]
    rows: u32,
    /// Patch file format (ppm or png)
    #[arg(long, default_value = "ppm")]
    format: String,
}

#[derive(clap::Args)]
struct SplitArgs {
    /// Manifest CSV: image_id,path,label
    #[arg(long)]
    manifest: PathBuf,
    /// Output split file (image_id,split)
    #[arg(long)]
    out: PathBuf,
    /// Split seed
    #[arg(long)]
    seed: u64,
    /// Number of test images
    #[arg(long, default_value_t = 80)]
    test_count: usize,
    /// Draw test_count/4 images per class instead of uniformly
    #[arg(long)]
    stratified: bool,
}

#[derive(clap::Args)]
struct AugmentArgs {
    /// Input patch directory (with index.csv, or contract-named files)
    #[arg(long)]
    patches: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Master seed for all stochastic draws
    #[arg(long)]
    seed: u64,
    /// Epoch number (part of every draw's stream key)
    #[arg(long, default_value_t = 0)]
    epoch: u32,
    /// Augmentation config as flat key=value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Emit the 8 dihedral variants of each patch before stochastic stages
    #[arg(long)]
    expand8: bool,
    /// Disable every stochastic stage (keeps --expand8 output unchanged)
    #[arg(long)]
    no_stochastic: bool,
    /// Write one line per (item, stage, params) draw to this file
    #[arg(long)]
    draw_log: Option<PathBuf>,
    /// Worker threads (output is identical for any value)
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output file format (ppm or png)
    #[arg(long, default_value = "ppm")]
    format: String,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Labeled patch directory (index.csv with labels required)
    #[arg(long)]
    patches: PathBuf,
    /// Output directory for checkpoint.bin and metrics.csv
    #[arg(long)]
    out: PathBuf,
    /// Seed for init, shuffling and augmentation
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Classifier input side in pixels (the baseline stack needs >= 17)
    #[arg(long, default_value_t = 256)]
    input_side: usize,
    /// Channel widths of the three conv layers, e.g. 16,32,64
    #[arg(long, default_value = "16,32,64")]
    channels: String,
    #[arg(long, default_value_t = 512)]
    fc_units: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Apply per-epoch stochastic augmentation with the default config
    #[arg(long)]
    augment: bool,
    /// Apply per-epoch stochastic augmentation with this config file
    #[arg(long)]
    augment_config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Checkpoint produced by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Patch directory (contract-named files or index.csv)
    #[arg(long)]
    patches: PathBuf,
    /// Model id recorded in every prediction row
    #[arg(long)]
    model_id: String,
    /// Output prediction CSV
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for the forward passes
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(clap::Args)]
struct VoteArgs {
    /// Prediction file(s); several files form a committee
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    /// Output decisions CSV (image_id,label)
    #[arg(long)]
    out: PathBuf,
    /// Expected patch count per image per model
    #[arg(long, default_value_t = 12)]
    patches_per_image: usize,
    /// Vote per model first, then across models (instead of flat pooling)
    #[arg(long)]
    per_model: bool,
    /// Tie-break rule: index (lowest class index) or prob-sum
    #[arg(long, default_value = "index")]
    tie_break: String,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Truth: manifest CSV (image_id,path,label) or pairs (image_id,label)
    #[arg(long)]
    truth: PathBuf,
    /// Output directory for the four report CSV blocks
    #[arg(long)]
    out: PathBuf,
    /// Image-level decision files as NAME=FILE (repeatable)
    #[arg(long = "decisions", value_parser = parse_named_path)]
    decisions: Vec<(String, PathBuf)>,
    /// Patch-level prediction files as NAME=FILE (repeatable)
    #[arg(long = "pred", value_parser = parse_named_path)]
    preds: Vec<(String, PathBuf)>,
    /// Split file (image_id,split) for train/test patchwise columns
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FiltersArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output image (.ppm or .png)
    #[arg(long)]
    out: PathBuf,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected NAME=FILE, got '{s}'")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = std::panic::catch_unwind(|| match cli.command {
        Command::Patch(args) => commands::cmd_patch(args),
        Command::Split(args) => commands::cmd_split(args),
        Command::Augment(args) => commands::cmd_augment(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Vote(args) => commands::cmd_vote(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Filters(args) => commands::cmd_filters(args),
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            ExitCode::from(2)
        }
    }
}
