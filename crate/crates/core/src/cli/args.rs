use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::msgan::Direction;
use crate::stainsep::NormalizerMethod;

#[derive(Debug, Parser)]
#[command(name = "multistain", version, about = "Stain normalization, metrics and tiling for H&E tiles")]
pub struct Cli {
    /// Seed for every random choice (initialization, data order, jitter).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress informational output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// JSON run configuration. Flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a template model (Reinhard statistics or a stain matrix).
    Fit(FitArgs),
    /// Normalize every PNG under a directory.
    Normalize(NormalizeArgs),
    /// Train the CycleGAN normalizer.
    Train(TrainArgs),
    /// Compute SSIM or FID.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Cut source images into tiles and write a manifest.
    Tiles(TilesArgs),
    /// Combine metric outputs into a results table and scatter data.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Reinhard,
    Macenko,
    Vahadane,
}

impl From<FitMethod> for NormalizerMethod {
    fn from(m: FitMethod) -> Self {
        match m {
            FitMethod::Reinhard => NormalizerMethod::Reinhard,
            FitMethod::Macenko => NormalizerMethod::Macenko,
            FitMethod::Vahadane => NormalizerMethod::Vahadane,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMethod {
    Reinhard,
    Macenko,
    Vahadane,
    /// The CycleGAN normalizer; `--model` is a checkpoint.
    Msgan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum DirectionArg {
    #[value(name = "to_x")]
    #[serde(rename = "to_x")]
    ToX,
    #[value(name = "to_y")]
    #[serde(rename = "to_y")]
    ToY,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::ToX => Direction::ToX,
            DirectionArg::ToY => Direction::ToY,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: FitMethod,
    /// Template PNG.
    #[arg(long)]
    pub template: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NormalizeArgs {
    #[arg(long, value_enum)]
    pub method: NormalizeMethod,
    /// Model JSON written by `fit`, or a training checkpoint for `msgan`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Generator to run for `msgan` (default `to_x`).
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Tiles of the target domain X.
    #[arg(long)]
    pub data_x: PathBuf,
    /// Tiles of the domain Y.
    #[arg(long)]
    pub data_y: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Total epochs of the schedule; the learning rate decays over the last
    /// half unless `--decay-epochs` is given.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub decay_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Per-pair SSIM from a CSV with columns `reference,candidate`.
    Ssim(SsimArgs),
    /// FID between two directories of tiles.
    Fid(FidArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SsimArgs {
    /// Paths are relative to this file's directory.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Per-pair CSV; the summary goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Method label carried into the report (default: the output file stem).
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct FidArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long = "cand")]
    pub candidate: PathBuf,
    /// Encoder spec JSON.
    #[arg(long)]
    pub encoder: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TilesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub annotated_overlap: Option<f64>,
    #[arg(long)]
    pub tissue: Option<f64>,
    /// Domain label of every source (e.g. the medical center).
    #[arg(long)]
    pub label: String,
    /// Sources carry annotations and use the annotated overlap.
    #[arg(long)]
    pub annotated: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Outputs of `eval`, classifier results, or any other machine output.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Label of the unnormalized reference row.
    #[arg(long)]
    pub baseline: Option<String>,
}
